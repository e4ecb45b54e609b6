"""Cross-species RNA-seq normalization and exact differential expression."""

__version__ = "0.1.0"

from .core import (
    ConservedSet,
    GeneRecord,
    OrthologTable,
    ScalingFactor,
    validate_table,
)
from .exact_test import (
    GeneTestInput,
    NullSuccessProb,
    gene_pvalue,
    gene_pvalues,
    null_success_prob,
    two_sided_exact_pvalue,
)
from .normalization import (
    GridConfig,
    MedianScaleResult,
    ObjectiveValue,
    PfdrInputs,
    ScbnResult,
    empirical_type1_deviation,
    estimate_pfdr,
    median_scaling_factor,
    scbn_scaling_factor,
)
from .pipeline import (
    Report,
    RunConfig,
    TestResult,
    bh_adjust,
    call_de,
    load_conserved_list,
    load_counts_tsv,
    run_pipeline,
    write_report,
)
from .simulation import (
    Metrics,
    SimConfig,
    SimulatedDataset,
    evaluate_run,
    generate_dataset,
    ma_plot_points,
    run_study,
)

__all__ = [
    "ConservedSet",
    "GeneRecord",
    "OrthologTable",
    "ScalingFactor",
    "validate_table",
    "GeneTestInput",
    "NullSuccessProb",
    "gene_pvalue",
    "gene_pvalues",
    "null_success_prob",
    "two_sided_exact_pvalue",
    "GridConfig",
    "MedianScaleResult",
    "ObjectiveValue",
    "PfdrInputs",
    "ScbnResult",
    "empirical_type1_deviation",
    "estimate_pfdr",
    "median_scaling_factor",
    "scbn_scaling_factor",
    "Report",
    "RunConfig",
    "TestResult",
    "bh_adjust",
    "call_de",
    "load_conserved_list",
    "load_counts_tsv",
    "run_pipeline",
    "write_report",
    "Metrics",
    "SimConfig",
    "SimulatedDataset",
    "evaluate_run",
    "generate_dataset",
    "ma_plot_points",
    "run_study",
]
