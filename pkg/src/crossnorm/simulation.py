"""Synthetic two-species count generator and benchmark machinery.

The generator draws a per-gene expression rate, plants differential
expression at a configured fold and direction split, adds unique genes
(orthologs expressed in one species only) and unmapped genes (present in
one species only, outside the ortholog table), then draws Poisson counts
whose means follow the between-species mean model: expected reads are
proportional to rate * length * depth / total-output.  The reported
conserved set is contaminated with a configurable fraction of truly-DE
genes to probe normalization robustness.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .core import ConservedSet, GeneRecord, OrthologTable, ScalingFactor, validate_table

__all__ = [
    "LABEL_NULL",
    "LABEL_DE_UP_SP1",
    "LABEL_DE_UP_SP2",
    "LABEL_UNIQUE_SP1",
    "LABEL_UNIQUE_SP2",
    "DE_LABELS",
    "SimConfig",
    "SimulatedDataset",
    "Metrics",
    "MaPlot",
    "StudyCellResult",
    "generate_dataset",
    "evaluate_run",
    "ma_plot_points",
    "run_study",
]

LABEL_NULL = "null"
LABEL_DE_UP_SP1 = "de_up_sp1"
LABEL_DE_UP_SP2 = "de_up_sp2"
LABEL_UNIQUE_SP1 = "unique_sp1"
LABEL_UNIQUE_SP2 = "unique_sp2"

# Genes counted as genuinely differentially expressed when scoring calls.
# Unique genes are expressed in one species only, the strongest possible
# difference, so calling them is a true positive rather than an error.
DE_LABELS = frozenset({LABEL_DE_UP_SP1, LABEL_DE_UP_SP2, LABEL_UNIQUE_SP1, LABEL_UNIQUE_SP2})

_LOGNORMAL_SIGMA = 1.5  # fallback rate model when no reference table is given


@dataclass(frozen=True)
class SimConfig:
    """Generator settings for one synthetic dataset."""

    n_orthologs: int
    conserved_size: int
    de_rate: float = 0.0
    fold: float = 1.5
    up_rate_sp2: float = 0.9
    n_unique_sp1: int = 0
    n_unique_sp2: int = 0
    n_unmapped_sp1: int = 0
    n_unmapped_sp2: int = 0
    noise_rate: float = 0.0
    depth_sp1: float = 1e6
    depth_sp2: float = 1e6
    length_min: int = 200
    length_max: int = 10200
    rate_source: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_orthologs <= 0:
            raise ValueError("n_orthologs must be positive")
        for name in ("de_rate", "up_rate_sp2", "noise_rate"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if not (self.fold > 1.0):
            raise ValueError("fold must exceed 1")
        for name in ("n_unique_sp1", "n_unique_sp2", "n_unmapped_sp1", "n_unmapped_sp2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.conserved_size < 1:
            raise ValueError("conserved_size must be >= 1")
        if self.depth_sp1 <= 0 or self.depth_sp2 <= 0:
            raise ValueError("depths must be positive")
        if not (1 <= self.length_min <= self.length_max):
            raise ValueError("need 1 <= length_min <= length_max")
        if self.rate_source is not None:
            if len(self.rate_source) == 0 or min(self.rate_source) <= 0:
                raise ValueError("rate_source must contain positive values")


@dataclass(frozen=True)
class SimulatedDataset:
    """Labeled synthetic dataset plus the generator's own ground truth."""

    table: OrthologTable
    truth: dict[str, str]
    reported_conserved: ConservedSet
    true_c: ScalingFactor
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Metrics:
    """Classification quality of a set of DE calls against the truth labels."""

    false_discoveries: int
    precision: float | None
    sensitivity: float | None
    f_score: float


@dataclass(frozen=True)
class MaPlot:
    """Per-gene (A, M) points plus the level of the scaling-factor line."""

    gene_ids: tuple[str, ...]
    a: np.ndarray
    m: np.ndarray
    factor_level: float
    skipped: int


def _draw_rates(rng: np.random.Generator, size: int, source: tuple[float, ...] | None):
    if size == 0:
        return np.zeros(0)
    if source is None:
        return rng.lognormal(mean=0.0, sigma=_LOGNORMAL_SIGMA, size=size)
    ref = np.asarray(source, dtype=np.float64)
    return rng.choice(ref / ref.sum(), size=size, replace=True)


def generate_dataset(config: SimConfig) -> SimulatedDataset:
    """Draw one dataset; the same config (including seed) is bit-reproducible."""
    rng = np.random.default_rng(config.seed)
    n_orth = config.n_orthologs

    # Expression rates and DE assignment for the shared orthologs.
    mu1 = _draw_rates(rng, n_orth, config.rate_source)
    n_de = int(round(config.de_rate * n_orth))
    n_null = n_orth - n_de
    order = rng.permutation(n_orth)
    de_idx = order[:n_de]
    n_up2 = int(round(config.up_rate_sp2 * n_de))
    mu2 = mu1.copy()
    mu2[de_idx[:n_up2]] *= config.fold
    mu2[de_idx[n_up2:]] /= config.fold

    labels = np.full(n_orth, LABEL_NULL, dtype=object)
    labels[de_idx[:n_up2]] = LABEL_DE_UP_SP2
    labels[de_idx[n_up2:]] = LABEL_DE_UP_SP1

    # Unique genes: expressed in one species, zero in the other.
    uniq1 = _draw_rates(rng, config.n_unique_sp1, config.rate_source)
    uniq2 = _draw_rates(rng, config.n_unique_sp2, config.rate_source)
    mu_sp1 = np.concatenate([mu1, uniq1, np.zeros(config.n_unique_sp2)])
    mu_sp2 = np.concatenate([mu2, np.zeros(config.n_unique_sp1), uniq2])
    n_table = mu_sp1.size

    len_sp1 = rng.integers(config.length_min, config.length_max + 1, size=n_table)
    len_sp2 = rng.integers(config.length_min, config.length_max + 1, size=n_table)

    # Total expression output over the ortholog table defines the true scale.
    s1 = float(np.sum(mu_sp1 * len_sp1))
    s2 = float(np.sum(mu_sp2 * len_sp2))

    counts_sp1 = rng.poisson(mu_sp1 * len_sp1 * (config.depth_sp1 / s1))
    counts_sp2 = rng.poisson(mu_sp2 * len_sp2 * (config.depth_sp2 / s2))

    # Unmapped genes exist in one species only; their reads inflate that
    # species' sequencing total but never enter the ortholog table.
    unm1_mu = _draw_rates(rng, config.n_unmapped_sp1, config.rate_source)
    unm1_len = rng.integers(config.length_min, config.length_max + 1, size=config.n_unmapped_sp1)
    unm2_mu = _draw_rates(rng, config.n_unmapped_sp2, config.rate_source)
    unm2_len = rng.integers(config.length_min, config.length_max + 1, size=config.n_unmapped_sp2)
    unmapped_reads_sp1 = int(rng.poisson(unm1_mu * unm1_len * (config.depth_sp1 / s1)).sum())
    unmapped_reads_sp2 = int(rng.poisson(unm2_mu * unm2_len * (config.depth_sp2 / s2)).sum())

    ids = [f"g{i:06d}" for i in range(n_table)]
    records = [
        GeneRecord(
            gene_id=ids[i],
            length_sp1=int(len_sp1[i]),
            length_sp2=int(len_sp2[i]),
            count_sp1=int(counts_sp1[i]),
            count_sp2=int(counts_sp2[i]),
        )
        for i in range(n_table)
    ]
    table = validate_table(records)

    truth = {ids[i]: str(labels[i]) for i in range(n_orth)}
    for j in range(config.n_unique_sp1):
        truth[ids[n_orth + j]] = LABEL_UNIQUE_SP1
    for j in range(config.n_unique_sp2):
        truth[ids[n_orth + config.n_unique_sp1 + j]] = LABEL_UNIQUE_SP2

    # Reported conserved set: mostly nulls, contaminated at the noise rate.
    # The contaminant pool is every non-null ortholog: planted fold-change
    # genes and unique genes alike are differentially expressed.
    n_keep_null = math.ceil((1.0 - config.noise_rate) * config.conserved_size)
    n_keep_noise = config.conserved_size - n_keep_null
    null_pool = np.flatnonzero(labels == LABEL_NULL)
    noise_pool = np.concatenate([de_idx, np.arange(n_orth, n_table)])
    if n_keep_null > null_pool.size:
        raise ValueError(
            f"conserved_size needs {n_keep_null} null orthologs, only {null_pool.size} available"
        )
    if n_keep_noise > noise_pool.size:
        raise ValueError(
            f"conserved noise needs {n_keep_noise} non-null orthologs, "
            f"only {noise_pool.size} available"
        )
    chosen = list(rng.choice(null_pool, size=n_keep_null, replace=False))
    if n_keep_noise:
        chosen.extend(rng.choice(noise_pool, size=n_keep_noise, replace=False))
    conserved = ConservedSet.for_table((ids[i] for i in chosen), table)

    meta = {
        "n_null": int(n_null),
        "n_de": int(n_de),
        "rate_model": "reference_table" if config.rate_source is not None else
                      f"lognormal(0, {_LOGNORMAL_SIGMA})",
        "unmapped_reads_sp1": unmapped_reads_sp1,
        "unmapped_reads_sp2": unmapped_reads_sp2,
        "total_reads_sp1": table.total_sp1 + unmapped_reads_sp1,
        "total_reads_sp2": table.total_sp2 + unmapped_reads_sp2,
        "seed": config.seed,
    }
    return SimulatedDataset(
        table=table,
        truth=truth,
        reported_conserved=conserved,
        true_c=ScalingFactor(s2 / s1),
        meta=meta,
    )


def evaluate_run(calls: Mapping[str, bool], truth: Mapping[str, str]) -> Metrics:
    """Score per-gene DE calls against truth labels.

    ``calls`` and ``truth`` must cover the same genes.  DE and unique genes
    count as real positives; nulls called DE are the false discoveries.
    Precision (or sensitivity) is None when its denominator is empty, and
    such runs are excluded from sweep averages rather than coerced to 0.
    """
    if set(calls) != set(truth):
        raise ValueError("calls and truth must cover the same genes")
    tp = fp = fn = 0
    for gene_id, called in calls.items():
        is_de = truth[gene_id] in DE_LABELS
        if called and is_de:
            tp += 1
        elif called and not is_de:
            fp += 1
        elif not called and is_de:
            fn += 1
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    sensitivity = tp / (tp + fn) if (tp + fn) > 0 else None
    if precision and sensitivity:
        f_score = 2.0 * precision * sensitivity / (precision + sensitivity)
    else:
        f_score = 0.0
    return Metrics(
        false_discoveries=fp,
        precision=precision,
        sensitivity=sensitivity,
        f_score=f_score,
    )


def ma_plot_points(table: OrthologTable, c: ScalingFactor) -> MaPlot:
    """Mean/difference log-expression pairs for every double-expressed gene.

    M is the species log-ratio, A the mean log-expression, both from
    count / (length * depth); the non-DE cloud should sit near log2(c).
    Genes with a zero count in either species are skipped (count reported).
    """
    ids, a_vals, m_vals = [], [], []
    skipped = 0
    for rec in table.records:
        if rec.count_sp1 == 0 or rec.count_sp2 == 0:
            skipped += 1
            continue
        e1 = rec.count_sp1 / (rec.length_sp1 * table.total_sp1)
        e2 = rec.count_sp2 / (rec.length_sp2 * table.total_sp2)
        ids.append(rec.gene_id)
        m_vals.append(math.log2(e1 / e2))
        a_vals.append(0.5 * math.log2(e1 * e2))
    return MaPlot(
        gene_ids=tuple(ids),
        a=np.asarray(a_vals),
        m=np.asarray(m_vals),
        factor_level=math.log2(c.c),
        skipped=skipped,
    )


@dataclass(frozen=True)
class StudyCellResult:
    """Replicate-averaged metrics for one (configuration, method) pair."""

    params: dict
    method: str
    replicates: int
    mean_false_discoveries: float
    mean_precision: float | None
    precision_undefined: int
    mean_sensitivity: float | None
    sensitivity_undefined: int
    mean_f_score: float
    mean_scaling_factor: float
    mean_true_c: float
    # Mean size of the called-gene overlap between the two methods, with and
    # without requiring the direction to agree; None unless both ran.
    mean_overlap_genes: float | None = None
    mean_overlap_directional: float | None = None


def _child_seed(master_seed: int, cell_index: int, rep: int) -> int:
    seq = np.random.SeedSequence([master_seed, cell_index, rep])
    return int(seq.generate_state(1, np.uint64)[0])


def run_study(
    base: SimConfig,
    sweep: Mapping[str, Sequence],
    methods: Sequence[str],
    replicates: int,
    cutoff: float,
    alpha: float = 0.05,
    master_seed: int = 0,
    grid=None,
) -> list[StudyCellResult]:
    """Generate/normalize/test/score over a configuration sweep.

    Every (cell, replicate) gets an independent derived seed, and all
    methods see the same dataset within a replicate.  Results are averaged
    per cell and method; replicates with an undefined metric are excluded
    from that metric's average with the exclusion counted.
    """
    from .normalization import GridConfig
    from .pipeline import estimate_factor, testable_calls

    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    for method in methods:
        if method not in ("scbn", "median"):
            raise ValueError(f"unknown method {method!r}")
    if grid is None:
        grid = GridConfig(alpha=alpha)

    fields = list(sweep.keys())
    cells = [dict(zip(fields, combo)) for combo in itertools.product(*sweep.values())]
    results: list[StudyCellResult] = []
    for cell_index, overrides in enumerate(cells):
        per_method: dict[str, list[Metrics]] = {m: [] for m in methods}
        factors: dict[str, list[float]] = {m: [] for m in methods}
        true_cs: list[float] = []
        overlap_any: list[int] = []
        overlap_dir: list[int] = []
        for rep in range(replicates):
            cfg = replace(base, seed=_child_seed(master_seed, cell_index, rep), **overrides)
            ds = generate_dataset(cfg)
            true_cs.append(ds.true_c.c)
            calls_by_method = {}
            for method in methods:
                factor = estimate_factor(ds.table, ds.reported_conserved, method, grid)
                calls, directions = testable_calls(ds.table, factor, cutoff)
                truth = {gid: ds.truth[gid] for gid in calls}
                per_method[method].append(evaluate_run(calls, truth))
                factors[method].append(factor.c)
                calls_by_method[method] = (calls, directions)
            if "scbn" in calls_by_method and "median" in calls_by_method:
                calls_a, dir_a = calls_by_method["scbn"]
                calls_b, dir_b = calls_by_method["median"]
                called_a = {g for g, v in calls_a.items() if v}
                called_b = {g for g, v in calls_b.items() if v}
                both = called_a & called_b
                overlap_any.append(len(both))
                overlap_dir.append(sum(1 for g in both if dir_a[g] == dir_b[g]))

        for method in methods:
            metrics = per_method[method]
            precisions = [m.precision for m in metrics if m.precision is not None]
            sensitivities = [m.sensitivity for m in metrics if m.sensitivity is not None]
            results.append(
                StudyCellResult(
                    params=dict(overrides),
                    method=method,
                    replicates=replicates,
                    mean_false_discoveries=float(
                        np.mean([m.false_discoveries for m in metrics])
                    ),
                    mean_precision=float(np.mean(precisions)) if precisions else None,
                    precision_undefined=len(metrics) - len(precisions),
                    mean_sensitivity=float(np.mean(sensitivities)) if sensitivities else None,
                    sensitivity_undefined=len(metrics) - len(sensitivities),
                    mean_f_score=float(np.mean([m.f_score for m in metrics])),
                    mean_scaling_factor=float(np.mean(factors[method])),
                    mean_true_c=float(np.mean(true_cs)),
                    mean_overlap_genes=float(np.mean(overlap_any)) if overlap_any else None,
                    mean_overlap_directional=float(np.mean(overlap_dir)) if overlap_dir else None,
                )
            )
    return results
