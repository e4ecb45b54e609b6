import math

import numpy as np
import pytest

from crossnorm.core import GeneRecord, ScalingFactor, validate_table
from crossnorm.normalization import empirical_type1_deviation
from crossnorm.simulation import (
    LABEL_DE_UP_SP1,
    LABEL_DE_UP_SP2,
    LABEL_NULL,
    LABEL_UNIQUE_SP1,
    LABEL_UNIQUE_SP2,
    Metrics,
    SimConfig,
    evaluate_run,
    generate_dataset,
    ma_plot_points,
    run_study,
)


def _study1_config(**overrides):
    base = dict(
        n_orthologs=1200,
        conserved_size=200,
        de_rate=0.1,
        fold=1.2,
        up_rate_sp2=0.9,
        n_unique_sp1=120,
        n_unique_sp2=240,
        n_unmapped_sp1=240,
        n_unmapped_sp2=480,
        depth_sp1=2e5,
        depth_sp2=2e5,
        seed=3,
    )
    base.update(overrides)
    return SimConfig(**base)


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


def test_same_seed_is_bit_identical():
    cfg = _study1_config()
    a = generate_dataset(cfg)
    b = generate_dataset(cfg)
    assert a.table == b.table
    assert a.truth == b.truth
    assert a.reported_conserved == b.reported_conserved
    assert a.true_c.c == b.true_c.c


def test_different_seed_differs():
    a = generate_dataset(_study1_config(seed=1))
    b = generate_dataset(_study1_config(seed=2))
    assert a.table != b.table


def test_label_accounting():
    cfg = _study1_config()
    ds = generate_dataset(cfg)
    counts = {}
    for label in ds.truth.values():
        counts[label] = counts.get(label, 0) + 1
    n_de = int(round(cfg.de_rate * cfg.n_orthologs))
    assert counts[LABEL_NULL] + counts.get(LABEL_DE_UP_SP1, 0) + counts.get(
        LABEL_DE_UP_SP2, 0
    ) == cfg.n_orthologs
    assert counts.get(LABEL_DE_UP_SP1, 0) + counts.get(LABEL_DE_UP_SP2, 0) == n_de
    assert counts.get(LABEL_DE_UP_SP2, 0) == int(round(cfg.up_rate_sp2 * n_de))
    assert counts[LABEL_UNIQUE_SP1] == cfg.n_unique_sp1
    assert counts[LABEL_UNIQUE_SP2] == cfg.n_unique_sp2
    assert len(ds.table) == cfg.n_orthologs + cfg.n_unique_sp1 + cfg.n_unique_sp2


def test_unique_genes_silent_in_the_other_species():
    ds = generate_dataset(_study1_config())
    by_id = {r.gene_id: r for r in ds.table}
    for gid, label in ds.truth.items():
        if label == LABEL_UNIQUE_SP1:
            assert by_id[gid].count_sp2 == 0
        elif label == LABEL_UNIQUE_SP2:
            assert by_id[gid].count_sp1 == 0


def test_conserved_noise_fraction():
    for noise in (0.0, 0.25, 0.5):
        ds = generate_dataset(_study1_config(noise_rate=noise, conserved_size=100))
        labels = [ds.truth[g] for g in ds.reported_conserved.gene_ids]
        n_noise = sum(1 for v in labels if v != LABEL_NULL)
        assert ds.reported_conserved.m == 100
        assert n_noise == math.floor(noise * 100)


def test_true_c_matches_generator_sums():
    ds = generate_dataset(_study1_config(seed=9))
    assert 0.5 < ds.true_c.c < 2.0  # symmetric rates, modest DE tilt


def test_unmapped_reads_inflate_species_totals_only():
    cfg = _study1_config()
    ds = generate_dataset(cfg)
    assert ds.meta["unmapped_reads_sp1"] > 0
    assert ds.meta["unmapped_reads_sp2"] > 0
    assert ds.meta["total_reads_sp1"] == ds.table.total_sp1 + ds.meta["unmapped_reads_sp1"]
    assert ds.meta["total_reads_sp2"] == ds.table.total_sp2 + ds.meta["unmapped_reads_sp2"]


def test_degenerate_configs_error():
    with pytest.raises(ValueError):
        SimConfig(n_orthologs=0, conserved_size=10)
    with pytest.raises(ValueError):
        SimConfig(n_orthologs=100, conserved_size=10, fold=1.0)
    # conserved set larger than the null pool
    with pytest.raises(ValueError):
        generate_dataset(SimConfig(n_orthologs=50, conserved_size=60, seed=1))
    # noise demands more DE genes than exist
    with pytest.raises(ValueError):
        generate_dataset(
            SimConfig(n_orthologs=100, conserved_size=50, de_rate=0.1, noise_rate=0.5, seed=1)
        )


def test_rate_source_sampling():
    ds = generate_dataset(_study1_config(rate_source=tuple(float(v) for v in range(1, 200))))
    assert ds.meta["rate_model"] == "reference_table"
    assert ds.table.total_sp1 > 0


def test_calibration_at_true_factor():
    # Truth-null conserved genes tested at c_true reject at most alpha plus
    # sampling slack (the exact test is conservative).
    cfg = SimConfig(n_orthologs=5000, conserved_size=5000, de_rate=0.0,
                    depth_sp1=1e6, depth_sp2=1e6, seed=123)
    ds = generate_dataset(cfg)
    value = empirical_type1_deviation(ds.table, ds.reported_conserved, ds.true_c, alpha=0.05)
    bound = 0.05 + 3.0 * math.sqrt(0.05 * 0.95 / 5000)
    assert value.rejection_rate <= bound


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def test_perfect_calls():
    truth = {"a": LABEL_NULL, "b": LABEL_DE_UP_SP2, "c": LABEL_UNIQUE_SP1}
    calls = {"a": False, "b": True, "c": True}
    m = evaluate_run(calls, truth)
    assert m == Metrics(false_discoveries=0, precision=1.0, sensitivity=1.0, f_score=1.0)


def test_hand_computed_confusion():
    # TP=3, FP=1, FN=2
    truth = {
        "t1": LABEL_DE_UP_SP1, "t2": LABEL_DE_UP_SP2, "t3": LABEL_UNIQUE_SP2,
        "m1": LABEL_DE_UP_SP2, "m2": LABEL_DE_UP_SP1,
        "n1": LABEL_NULL, "n2": LABEL_NULL, "n3": LABEL_NULL,
    }
    calls = {
        "t1": True, "t2": True, "t3": True,
        "m1": False, "m2": False,
        "n1": True, "n2": False, "n3": False,
    }
    m = evaluate_run(calls, truth)
    assert m.false_discoveries == 1
    assert m.precision == pytest.approx(0.75)
    assert m.sensitivity == pytest.approx(0.6)
    assert m.f_score == pytest.approx(2 * 0.75 * 0.6 / 1.35)


def test_no_calls_with_de_present():
    truth = {"a": LABEL_DE_UP_SP2, "b": LABEL_NULL}
    calls = {"a": False, "b": False}
    m = evaluate_run(calls, truth)
    assert m.precision is None
    assert m.sensitivity == 0.0
    assert m.f_score == 0.0
    assert m.false_discoveries == 0


def test_mismatched_gene_sets_error():
    with pytest.raises(ValueError):
        evaluate_run({"a": True}, {"a": LABEL_NULL, "b": LABEL_NULL})


def test_metric_bounds_random():
    rng = np.random.default_rng(8)
    labels = [LABEL_NULL, LABEL_DE_UP_SP1, LABEL_DE_UP_SP2, LABEL_UNIQUE_SP1]
    truth = {f"g{i}": labels[rng.integers(len(labels))] for i in range(200)}
    calls = {g: bool(rng.integers(2)) for g in truth}
    m = evaluate_run(calls, truth)
    for value in (m.precision, m.sensitivity, m.f_score):
        if value is not None:
            assert 0.0 <= value <= 1.0
    if m.precision == 0.0 or m.sensitivity == 0.0:
        assert m.f_score == 0.0


# ---------------------------------------------------------------------------
# MA plot data
# ---------------------------------------------------------------------------


def test_ma_plot_values():
    records = [
        GeneRecord("same", 100, 100, 50, 50),     # e1 == e2 -> M = 0
        GeneRecord("quad", 100, 100, 200, 50),    # e1 = 4 e2 -> M = 2
        GeneRecord("skip", 100, 100, 0, 150),     # zero in one species
    ]
    table = validate_table(records)
    plot = ma_plot_points(table, ScalingFactor(1.0))
    assert plot.skipped == 1
    assert plot.gene_ids == ("same", "quad")
    # totals are equal (250 reads each side), so count ratios are e ratios
    assert plot.m[0] == pytest.approx(0.0, abs=1e-12)
    assert plot.m[1] == pytest.approx(2.0, abs=1e-12)
    assert plot.factor_level == 0.0
    expected_a = 0.5 * math.log2((50 / (100 * 250)) ** 2)
    assert plot.a[0] == pytest.approx(expected_a, rel=1e-12)


def test_ma_plot_factor_line():
    records = [GeneRecord("g", 100, 100, 10, 10)]
    table = validate_table(records)
    assert ma_plot_points(table, ScalingFactor(2.0)).factor_level == 1.0


def test_ma_plot_preserves_table_order():
    rng = np.random.default_rng(4)
    records = [
        GeneRecord(f"g{i}", 100, 100, int(rng.integers(1, 50)), int(rng.integers(1, 50)))
        for i in range(20)
    ]
    table = validate_table(records)
    plot = ma_plot_points(table, ScalingFactor(1.0))
    assert list(plot.gene_ids) == [r.gene_id for r in records]


# ---------------------------------------------------------------------------
# Study runner
# ---------------------------------------------------------------------------


def test_run_study_deterministic_and_complete():
    base = _study1_config(n_orthologs=600, conserved_size=120, n_unique_sp1=60,
                          n_unique_sp2=120, n_unmapped_sp1=100, n_unmapped_sp2=200,
                          depth_sp1=1e5, depth_sp2=1e5)
    kwargs = dict(
        sweep={"noise_rate": [0.0, 0.3]},
        methods=["scbn", "median"],
        replicates=1,
        cutoff=0.01,
        master_seed=17,
    )
    first = run_study(base, **kwargs)
    second = run_study(base, **kwargs)
    assert first == second
    assert len(first) == 4  # 2 cells x 2 methods
    for cell in first:
        assert cell.replicates == 1
        assert cell.mean_scaling_factor > 0
        assert cell.mean_overlap_genes is not None
        assert cell.mean_overlap_directional <= cell.mean_overlap_genes


def test_run_study_single_method_has_no_overlap():
    base = _study1_config(n_orthologs=400, conserved_size=80, n_unique_sp1=0,
                          n_unique_sp2=0, n_unmapped_sp1=0, n_unmapped_sp2=0,
                          depth_sp1=5e4, depth_sp2=5e4)
    cells = run_study(base, {}, ["median"], replicates=2, cutoff=0.01, master_seed=1)
    assert len(cells) == 1
    assert cells[0].mean_overlap_genes is None


def test_run_study_rejects_unknown_method():
    base = _study1_config()
    with pytest.raises(ValueError):
        run_study(base, {}, ["tmm"], replicates=1, cutoff=0.01)
