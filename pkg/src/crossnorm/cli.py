"""Command-line interface.

Subcommands map one-to-one onto the toolkit's activities: ``normalize``
estimates the scaling factor, ``test`` runs the full per-gene pipeline,
``simulate`` draws a labeled synthetic dataset, ``study`` runs a
configuration sweep, and ``evaluate`` scores calls against truth labels.
"""
from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from . import __version__
from .core import ScalingFactor
from .normalization import GridConfig, median_scaling_factor, scbn_scaling_factor
from .pipeline import (
    RunConfig,
    load_conserved_list,
    load_counts_tsv,
    run_pipeline,
    summary_dict,
    write_report,
)
from .simulation import SimConfig, evaluate_run, generate_dataset, run_study


def _fmt6(value: float) -> str:
    return f"{value:.6g}"


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


_grid_options = [
    click.option("--alpha", type=float, default=0.05, show_default=True,
                 help="Significance level for the rejection-rate objective."),
    click.option("--grid-center", type=float, default=None,
                 help="Grid center (defaults to the median baseline estimate)."),
    click.option("--grid-span", type=float, default=10.0, show_default=True,
                 help="Grid spans [center/span, center*span]."),
    click.option("--grid-points", type=int, default=1000, show_default=True),
]


def _add_options(options):
    def wrap(func):
        for option in reversed(options):
            func = option(func)
        return func
    return wrap


@click.group()
@click.version_option(version=__version__, prog_name="crossnorm")
def main() -> None:
    """Cross-species RNA-seq normalization and exact DE testing."""


@main.command()
@click.option("--counts", "counts_path", required=True, type=click.Path(exists=True))
@click.option("--conserved", "conserved_path", required=True, type=click.Path(exists=True))
@click.option("--method", type=click.Choice(["scbn", "median"]), default="scbn",
              show_default=True)
@_add_options(_grid_options)
@click.option("--output", "output_path", type=click.Path(), default=None,
              help="Optional JSON file for the estimate.")
def normalize(counts_path, conserved_path, method, alpha, grid_center, grid_span,
              grid_points, output_path) -> None:
    """Estimate the between-species scaling factor."""
    try:
        table = load_counts_tsv(counts_path)
        conserved, unknown = load_conserved_list(conserved_path, table)
        if unknown:
            click.echo(f"warning: {unknown} conserved id(s) not in the count table", err=True)
        payload = {"method": method, "conserved_used": conserved.m}
        if method == "scbn":
            grid = GridConfig(alpha=alpha, center=grid_center, span=grid_span,
                              coarse_points=grid_points)
            fit = scbn_scaling_factor(table, conserved, grid)
            payload["scaling_factor"] = float(_fmt6(fit.factor.c))
            payload["objective"] = {
                "deviation": float(_fmt6(fit.objective.deviation)),
                "rejection_rate": float(_fmt6(fit.objective.rejection_rate)),
            }
            click.echo(f"scaling_factor\t{_fmt6(fit.factor.c)}")
            click.echo(f"rejection_rate\t{_fmt6(fit.objective.rejection_rate)}")
            click.echo(f"deviation\t{_fmt6(fit.objective.deviation)}")
        else:
            est = median_scaling_factor(table, conserved)
            payload["scaling_factor"] = float(_fmt6(est.factor.c))
            payload["iqr_filtered"] = est.iqr_filtered
            payload["kept_genes"] = est.kept_genes
            click.echo(f"scaling_factor\t{_fmt6(est.factor.c)}")
            if not est.iqr_filtered:
                click.echo("warning: IQR filter kept no genes; used all conserved genes",
                           err=True)
        if output_path:
            Path(output_path).write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
    except (ValueError, OSError) as exc:
        _fail(str(exc))


@main.command(name="test")
@click.option("--counts", "counts_path", required=True, type=click.Path(exists=True))
@click.option("--conserved", "conserved_path", required=True, type=click.Path(exists=True))
@click.option("--method", type=click.Choice(["scbn", "median"]), default="scbn",
              show_default=True)
@_add_options(_grid_options)
@click.option("--cutoff", type=float, default=1e-6, show_default=True,
              help="DE-calling p-value threshold.")
@click.option("--eval-list", "eval_list_path", type=click.Path(exists=True), default=None,
              help="Gene list whose DE tally is reported separately.")
@click.option("--output", "output_dir", required=True, type=click.Path(),
              help="Directory for summary.json and results.tsv.")
def test_cmd(counts_path, conserved_path, method, alpha, grid_center, grid_span,
             grid_points, cutoff, eval_list_path, output_dir) -> None:
    """Run the full pipeline: normalize, test every gene, call DE, report."""
    try:
        config = RunConfig(
            counts_path=counts_path,
            conserved_path=conserved_path,
            method=method,
            alpha=alpha,
            cutoff=cutoff,
            eval_list_path=eval_list_path,
            grid_center=grid_center,
            grid_span=grid_span,
            grid_points=grid_points,
        )
        report = run_pipeline(config)
        if report.conserved_unknown:
            click.echo(
                f"warning: {report.conserved_unknown} conserved id(s) not in the count table",
                err=True,
            )
        summary_path, results_path = write_report(report, output_dir)
        click.echo(f"scaling_factor\t{_fmt6(report.scaling_factor)}")
        click.echo(f"total_de\t{report.total_de}")
        click.echo(f"higher_sp1\t{report.higher_sp1}")
        click.echo(f"higher_sp2\t{report.higher_sp2}")
        click.echo(f"summary\t{summary_path}")
        click.echo(f"results\t{results_path}")
    except (ValueError, OSError) as exc:
        _fail(str(exc))


def _sim_config_from_spec(spec: dict) -> SimConfig:
    known = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = set(spec) - known
    if unknown:
        raise ValueError(f"unknown simulation field(s): {', '.join(sorted(unknown))}")
    if "rate_source" in spec and spec["rate_source"] is not None:
        spec = dict(spec)
        spec["rate_source"] = tuple(float(v) for v in spec["rate_source"])
    return SimConfig(**spec)


def _load_rate_table(path: str) -> tuple[float, ...]:
    table = load_counts_tsv(path)
    rates = [float(r.count_sp1 + r.count_sp2) for r in table.records
             if r.count_sp1 + r.count_sp2 > 0]
    if not rates:
        raise ValueError(f"{path}: reference table has no expressed genes")
    return tuple(rates)


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="JSON file with SimConfig fields (flags are ignored if given).")
@click.option("--n-orthologs", type=int, default=None)
@click.option("--conserved-size", type=int, default=1000, show_default=True)
@click.option("--de-rate", type=float, default=0.1, show_default=True)
@click.option("--fold", type=float, default=1.5, show_default=True)
@click.option("--up-rate-sp2", type=float, default=0.9, show_default=True)
@click.option("--unique-sp1", type=int, default=0, show_default=True)
@click.option("--unique-sp2", type=int, default=0, show_default=True)
@click.option("--unmapped-sp1", type=int, default=0, show_default=True)
@click.option("--unmapped-sp2", type=int, default=0, show_default=True)
@click.option("--noise-rate", type=float, default=0.0, show_default=True)
@click.option("--depth-sp1", type=float, default=1e6, show_default=True)
@click.option("--depth-sp2", type=float, default=1e6, show_default=True)
@click.option("--rate-table", type=click.Path(exists=True), default=None,
              help="Count table supplying the empirical rate distribution.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output", "output_dir", required=True, type=click.Path())
def simulate(spec_path, n_orthologs, conserved_size, de_rate, fold, up_rate_sp2,
             unique_sp1, unique_sp2, unmapped_sp1, unmapped_sp2, noise_rate,
             depth_sp1, depth_sp2, rate_table, seed, output_dir) -> None:
    """Write a synthetic dataset: counts.tsv, conserved.txt, truth.tsv, meta.json."""
    try:
        if spec_path is not None:
            config = _sim_config_from_spec(json.loads(Path(spec_path).read_text("utf-8")))
        else:
            if n_orthologs is None:
                raise ValueError("either --spec or --n-orthologs is required")
            config = SimConfig(
                n_orthologs=n_orthologs,
                conserved_size=conserved_size,
                de_rate=de_rate,
                fold=fold,
                up_rate_sp2=up_rate_sp2,
                n_unique_sp1=unique_sp1,
                n_unique_sp2=unique_sp2,
                n_unmapped_sp1=unmapped_sp1,
                n_unmapped_sp2=unmapped_sp2,
                noise_rate=noise_rate,
                depth_sp1=depth_sp1,
                depth_sp2=depth_sp2,
                rate_source=_load_rate_table(rate_table) if rate_table else None,
                seed=seed,
            )
        dataset = generate_dataset(config)
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "counts.tsv").open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("gene_id\tlength_sp1\tcount_sp1\tlength_sp2\tcount_sp2\n")
            for r in dataset.table.records:
                fh.write(f"{r.gene_id}\t{r.length_sp1}\t{r.count_sp1}"
                         f"\t{r.length_sp2}\t{r.count_sp2}\n")
        with (out / "conserved.txt").open("w", encoding="utf-8", newline="\n") as fh:
            for gid in sorted(dataset.reported_conserved.gene_ids):
                fh.write(gid + "\n")
        with (out / "truth.tsv").open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("gene_id\tlabel\n")
            for r in dataset.table.records:
                fh.write(f"{r.gene_id}\t{dataset.truth[r.gene_id]}\n")
        meta = dict(dataset.meta)
        meta["true_c"] = float(_fmt6(dataset.true_c.c))
        with (out / "meta.json").open("w", encoding="utf-8", newline="\n") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        click.echo(f"true_c\t{_fmt6(dataset.true_c.c)}")
        click.echo(f"output\t{out}")
    except (ValueError, OSError) as exc:
        _fail(str(exc))


_STUDY_COLUMNS = [
    "method", "replicates", "mean_false_discoveries", "mean_precision",
    "precision_undefined", "mean_sensitivity", "sensitivity_undefined",
    "mean_f_score", "mean_scaling_factor", "mean_true_c",
    "mean_overlap_genes", "mean_overlap_directional",
]


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="JSON study spec: base config, sweep, methods, replicates.")
@click.option("--output", "output_dir", required=True, type=click.Path())
def study(spec_path, output_dir) -> None:
    """Run a simulation sweep and write the replicate-averaged result grid."""
    try:
        spec = json.loads(Path(spec_path).read_text("utf-8"))
        base = _sim_config_from_spec(spec["base"])
        sweep = spec.get("sweep", {})
        methods = spec.get("methods", ["scbn", "median"])
        replicates = int(spec.get("replicates", 100))
        cutoff = float(spec.get("cutoff", 1e-6))
        alpha = float(spec.get("alpha", 0.05))
        master_seed = int(spec.get("seed", 0))
        cells = run_study(base, sweep, methods, replicates, cutoff,
                          alpha=alpha, master_seed=master_seed)
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        sweep_fields = list(sweep.keys())
        grid_path = out / "grid.tsv"
        with grid_path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("\t".join(sweep_fields + _STUDY_COLUMNS) + "\n")
            for cell in cells:
                row = [_fmt6(float(cell.params[f])) for f in sweep_fields]
                for col in _STUDY_COLUMNS:
                    value = getattr(cell, col)
                    if value is None:
                        row.append("NA")
                    elif isinstance(value, float):
                        row.append(_fmt6(value))
                    else:
                        row.append(str(value))
                fh.write("\t".join(row) + "\n")
        click.echo(f"cells\t{len(cells)}")
        click.echo(f"grid\t{grid_path}")
    except (KeyError, ValueError, OSError) as exc:
        _fail(str(exc))


@main.command()
@click.option("--results", "results_path", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", type=click.Path(), default=None)
def evaluate(results_path, truth_path, output_path) -> None:
    """Score a results.tsv against simulation truth labels."""
    try:
        calls: dict[str, bool] = {}
        with Path(results_path).open("r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if header[:1] != ["gene_id"] or "de_call" not in header:
                raise ValueError(f"{results_path}: not a results table")
            de_col = header.index("de_call")
            p_col = header.index("p_value")
            for line in fh:
                fields = line.rstrip("\n").split("\t")
                if fields[p_col] == "NA":
                    continue
                calls[fields[0]] = fields[de_col] == "true"
        truth: dict[str, str] = {}
        with Path(truth_path).open("r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if header != ["gene_id", "label"]:
                raise ValueError(f"{truth_path}: expected header 'gene_id\\tlabel'")
            for line in fh:
                gid, label = line.rstrip("\n").split("\t")
                truth[gid] = label
        tested_truth = {gid: truth[gid] for gid in calls if gid in truth}
        if set(tested_truth) != set(calls):
            missing = len(set(calls) - set(truth))
            raise ValueError(f"{missing} tested gene(s) missing from the truth table")
        metrics = evaluate_run(calls, tested_truth)
        payload = {
            "false_discoveries": metrics.false_discoveries,
            "precision": None if metrics.precision is None else float(_fmt6(metrics.precision)),
            "sensitivity": None if metrics.sensitivity is None
                           else float(_fmt6(metrics.sensitivity)),
            "f_score": float(_fmt6(metrics.f_score)),
            "tested_genes": len(calls),
            "untested_genes": len(truth) - len(calls),
        }
        text = json.dumps(payload, indent=2, sort_keys=True)
        click.echo(text)
        if output_path:
            Path(output_path).write_text(text + "\n", encoding="utf-8")
    except (ValueError, OSError) as exc:
        _fail(str(exc))


if __name__ == "__main__":
    main()
