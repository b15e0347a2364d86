"""Command-line surface: decompose, tune, simulate, identify, report.

Exit codes: 0 success, 2 malformed input (CSV/JSON, with a line number when
available), 3 numerical failure. All randomized commands take --seed and are
reproducible; SMOOTHHOOI_THREADS caps worker parallelism (default: all cores).
"""

import csv
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .decompose import Decomposition, FitOptions, fit_missing
from .ingest import (InputFormatError, NormalizationInfo, gridify, quality_filter,
                     read_long_csv, write_long_csv)
from .postprocess import (component_effect_curves, component_variance_profile,
                          explained_variance, identify as identify_fit)
from .smoothing import build_operator
from .simulate import SimulationConfig, run_study
from .tensor import MaskedTensor
from .tuning import GridSpec, grid_search, make_folds


def _guard(fn):
    """Map failures to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InputFormatError as exc:
            click.echo(f"input error: {exc}", err=True)
            sys.exit(2)
        except json.JSONDecodeError as exc:
            click.echo(f"config error: line {exc.lineno}: {exc.msg}", err=True)
            sys.exit(2)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _ingest(input_path, grid_start_hour, apply_quality_filter):
    records = read_long_csv(input_path)
    roster = {r.subject_id for r in records}
    rejections = []
    if apply_quality_filter:
        records, rejections = quality_filter(records)
        dropped = sorted(roster - {r.subject_id for r in records})
        if dropped:
            click.echo(f"warning: every reading rejected for subjects {dropped}", err=True)
    labels = {r.measure for r in records}
    measures = ("SBP", "DBP", "HR") if labels == {"SBP", "DBP", "HR"} else None
    tensor, info, subjects, warnings = gridify(records, grid_start_hour, measures)
    for w in warnings:
        click.echo(f"warning: {w}", err=True)
    return tensor, info, subjects, rejections


def _write_matrix_csv(path, mat, row_labels, row_header, col_names):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([row_header, *col_names])
        for label, row in zip(row_labels, mat):
            writer.writerow([label, *[repr(float(v)) for v in row]])


def _score_labels(r1, r2):
    return [f"g_{p + 1}{q + 1}" for p in range(r1) for q in range(r2)]


def _write_fit(out_dir, dec, info, subjects, tensor, boundary, rejections):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    a, b, n = tensor.dims
    r1, r2 = dec.ranks
    hours = [(info.grid_start_hour + row) % 24 for row in range(a)]
    _write_matrix_csv(out / "L.csv", dec.l_factor, hours, "hour",
                      [f"L{k + 1}" for k in range(r1)])
    _write_matrix_csv(out / "R.csv", dec.r_factor, info.measures, "measure",
                      [f"R{k + 1}" for k in range(r2)])
    _write_matrix_csv(out / "scores.csv", dec.cores.reshape(n, r1 * r2), subjects,
                      "subject_id", _score_labels(r1, r2))
    write_long_csv(out / "imputed.csv", dec.imputed, tensor.mask, subjects, info)
    fit_meta = {
        "lambda": dec.lam,
        "ranks": list(dec.ranks),
        "boundary": boundary,
        "objective_trace": [float(v) for v in dec.objective_trace],
        "converged": bool(dec.converged),
        "iterations": {"outer": dec.iterations[0], "inner_total": dec.iterations[1]},
        "explained_variance": explained_variance(tensor, dec),
        "warnings": list(dec.diagnostics),
        "normalization": {
            "measures": list(info.measures),
            "means": [float(v) for v in info.means],
            "sds": [float(v) for v in info.sds],
            "grid_start_hour": info.grid_start_hour,
        },
        "subjects": list(subjects),
    }
    with open(out / "fit.json", "w") as fh:
        json.dump(fit_meta, fh, indent=2)
    if rejections:
        (out / "rejections.txt").write_text("\n".join(rejections) + "\n")


def _read_matrix_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = [row[0] for row in rows[1:]]
    values = np.asarray([[float(v) for v in row[1:]] for row in rows[1:]])
    return labels, values


def _load_fit(fit_dir):
    fit_dir = Path(fit_dir)
    meta = _load_json(fit_dir / "fit.json")
    _, l_factor = _read_matrix_csv(fit_dir / "L.csv")
    _, r_factor = _read_matrix_csv(fit_dir / "R.csv")
    subjects, scores = _read_matrix_csv(fit_dir / "scores.csv")
    r1, r2 = meta["ranks"]
    dec = Decomposition(
        l_factor=l_factor, r_factor=r_factor, cores=scores.reshape(len(subjects), r1, r2),
        lam=meta["lambda"], ranks=(r1, r2),
        objective_trace=np.asarray(meta["objective_trace"]),
        converged=meta["converged"],
        iterations=(meta["iterations"]["outer"], meta["iterations"]["inner_total"]),
        diagnostics=tuple(meta["warnings"]),
    )
    norm = meta["normalization"]
    info = NormalizationInfo(tuple(norm["measures"]), np.asarray(norm["means"]),
                             np.asarray(norm["sds"]), norm["grid_start_hour"])
    return dec, info, subjects, meta


def _load_masked_tensor(fit_dir, info, subjects):
    """Rebuild the normalized masked tensor from imputed.csv's observed column."""
    fit_dir = Path(fit_dir)
    a, b, n = 24, len(info.measures), len(subjects)
    measure_index = {m: j for j, m in enumerate(info.measures)}
    subject_index = {s: i for i, s in enumerate(subjects)}
    values = np.zeros((a, b, n))
    mask = np.zeros((a, b, n), dtype=bool)
    with open(fit_dir / "imputed.csv", newline="") as fh:
        for line, row in enumerate(csv.DictReader(fh), start=2):
            try:
                i = subject_index[row["subject_id"]]
                j = measure_index[row["measure"]]
                grid_row = (int(row["hour"]) - info.grid_start_hour) % 24
                observed = row["observed"] == "1"
                value = float(row["value"])
            except (KeyError, TypeError, ValueError) as exc:
                raise InputFormatError(f"bad imputed.csv row: {exc}", line) from exc
            if observed:
                values[grid_row, j, i] = (value - info.means[j]) / info.sds[j]
                mask[grid_row, j, i] = True
    return MaskedTensor(values, mask)


def _parse_range(text):
    if ":" in text:
        lo, hi = text.split(":", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in text.split(","))


@click.group()
def main():
    """Smoothness-penalized low-rank decomposition of 24-hour monitoring data."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--r1", type=int, default=None, help="Temporal rank.")
@click.option("--r2", type=int, default=None, help="Measure rank.")
@click.option("--lambda", "lam", type=float, default=None, help="Smoothing parameter.")
@click.option("--boundary", type=click.Choice(["periodic", "open"]), default="periodic")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--options", "options_path", type=click.Path(exists=True), default=None,
              help="JSON file mirroring the fit options, overridden by explicit flags.")
@click.option("--grid-start-hour", type=int, default=12)
@click.option("--quality-filter/--no-quality-filter", "use_filter", default=True)
@_guard
def decompose(input_path, r1, r2, lam, boundary, out_dir, options_path,
              grid_start_hour, use_filter):
    """Fit the decomposition to a long-format CSV and write the fit artifacts."""
    base = _load_json(options_path) if options_path else {}
    if r1 is not None and r2 is not None:
        base["ranks"] = [r1, r2]
    if lam is not None:
        base["lam"] = lam
    if "ranks" not in base or "lam" not in base:
        raise InputFormatError("ranks (--r1/--r2) and smoothing (--lambda) are required")
    allowed = {"lam", "ranks", "max_inner_iterations", "max_outer_iterations",
               "inner_tolerance", "outer_tolerance", "initial_fill", "variant"}
    unknown = set(base) - allowed
    if unknown:
        raise InputFormatError(f"unknown fit option fields: {sorted(unknown)}")
    base["ranks"] = tuple(base["ranks"])
    opts = FitOptions(**base)

    tensor, info, subjects, rejections = _ingest(input_path, grid_start_hour, use_filter)
    op = build_operator(tensor.dims[0], opts.lam, boundary)
    dec = fit_missing(tensor, opts, op)
    _write_fit(out_dir, dec, info, subjects, tensor, boundary, rejections)
    click.echo(f"fit written to {out_dir} "
               f"(explained variance {explained_variance(tensor, dec):.3f})")


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--k", type=int, default=5, help="Number of CV folds.")
@click.option("--lambda-min", type=float, default=1.0)
@click.option("--lambda-max", type=float, default=50.0)
@click.option("--r1-range", default="2:6", help="lo:hi or comma list.")
@click.option("--r2-range", default="2:3", help="lo:hi or comma list.")
@click.option("--seed", type=int, default=0)
@click.option("--boundary", type=click.Choice(["periodic", "open"]), default="periodic")
@click.option("--grid", "grid_path", type=click.Path(exists=True), default=None,
              help="JSON file mirroring the grid spec, overridden by explicit flags.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--grid-start-hour", type=int, default=12)
@click.option("--quality-filter/--no-quality-filter", "use_filter", default=True)
@_guard
def tune(input_path, k, lambda_min, lambda_max, r1_range, r2_range, seed, boundary,
         grid_path, out_dir, grid_start_hour, use_filter):
    """Cross-validated coarse-to-fine search over ranks and lambda."""
    if grid_path:
        spec_fields = _load_json(grid_path)
        spec_fields["r1_values"] = tuple(spec_fields["r1_values"])
        spec_fields["r2_values"] = tuple(spec_fields["r2_values"])
        spec = GridSpec(**spec_fields)
    else:
        spec = GridSpec(_parse_range(r1_range), _parse_range(r2_range),
                        lambda_min, lambda_max)

    tensor, _, _, _ = _ingest(input_path, grid_start_hour, use_filter)
    folds = make_folds(tensor, k, seed)
    report = grid_search(tensor, folds, spec, boundary=boundary)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cv_report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "r1", "r2", "lambda", "cv_error",
                         "warm_start", "skipped_folds", "selected"])
        for e in report.entries:
            is_selected = (e.r1, e.r2, e.lam) == report.selected
            writer.writerow([e.stage, e.r1, e.r2, repr(e.lam), repr(e.error),
                             int(e.warm_start),
                             ";".join(map(str, e.skipped_folds)), int(is_selected)])
    r1_sel, r2_sel, lam_sel = report.selected
    click.echo(f"selected r1={r1_sel} r2={r2_sel} lambda={lam_sel:g} "
               f"(cv error {report.selected_error:.6g})")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Overrides the config's seed.")
@_guard
def simulate(config_path, out_dir, seed):
    """Run the seeded simulation study described by a JSON config."""
    raw = _load_json(config_path)
    if seed is not None:
        raw["seed"] = seed
    for key in ("truth_ranks", "missing", "lambda_range", "cases"):
        if key in raw:
            raw[key] = tuple(raw[key])
    if "rank_search" in raw:
        raw["rank_search"] = tuple(tuple(v) for v in raw["rank_search"])
    for key in ("core_mean", "core_covariance"):
        if key in raw and raw[key] is not None:
            raw[key] = np.asarray(raw[key], dtype=float)
    try:
        config = SimulationConfig(**raw)
    except TypeError as exc:
        raise InputFormatError(f"bad simulation config: {exc}") from exc

    result = run_study(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / "results.csv")
    for rep, message in result.failures:
        click.echo(f"replication {rep} failed: {message}", err=True)
    for line in result.summary():
        click.echo(f"{line['setting']} {line['method']}: "
                   f"median loss_M {line['loss_M_median']:.4g} "
                   f"[{line['loss_M_q1']:.4g}, {line['loss_M_q3']:.4g}] "
                   f"({line['count']} replications)")


@main.command("identify")
@click.option("--fit", "fit_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Defaults to the fit directory.")
@_guard
def identify_cmd(fit_dir, out_dir):
    """Rotate a saved fit to its identifiable (ordered) form."""
    dec, info, subjects, _ = _load_fit(fit_dir)
    identified = identify_fit(dec)
    out = Path(out_dir) if out_dir else Path(fit_dir)
    out.mkdir(parents=True, exist_ok=True)
    a = identified.l_tilde.shape[0]
    r1, r2 = identified.ranks
    hours = [(info.grid_start_hour + row) % 24 for row in range(a)]
    _write_matrix_csv(out / "L_identified.csv", identified.l_tilde, hours, "hour",
                      [f"L{k + 1}" for k in range(r1)])
    _write_matrix_csv(out / "R_identified.csv", identified.r_tilde, info.measures,
                      "measure", [f"R{k + 1}" for k in range(r2)])
    _write_matrix_csv(out / "scores_identified.csv",
                      identified.cores_tilde.reshape(len(subjects), r1 * r2),
                      subjects, "subject_id", _score_labels(r1, r2))
    with open(out / "identify.json", "w") as fh:
        json.dump({
            "mode1_singular_values": [float(v) for v in identified.mode1_singular_values],
            "mode2_singular_values": [float(v) for v in identified.mode2_singular_values],
            "warnings": list(identified.warnings),
        }, fh, indent=2)
    for w in identified.warnings:
        click.echo(f"warning: {w}", err=True)
    click.echo(f"identified fit written to {out}")


@main.command()
@click.option("--fit", "fit_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@_guard
def report(fit_dir, out_dir):
    """Emit component curves, variance profiles, and effect curves as CSVs."""
    dec, info, subjects, _ = _load_fit(fit_dir)
    identified = identify_fit(dec)
    tensor = _load_masked_tensor(fit_dir, info, subjects)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    a = identified.l_tilde.shape[0]
    r1, r2 = identified.ranks
    hours = [(info.grid_start_hour + row) % 24 for row in range(a)]
    _write_matrix_csv(out / "component_curves.csv", identified.l_tilde, hours, "hour",
                      [f"L{k + 1}" for k in range(r1)])

    mode1, mode2 = component_variance_profile(identified, tensor)
    with open(out / "variance_profiles.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "component", "share"])
        for k, share in enumerate(mode1, start=1):
            writer.writerow([1, k, repr(float(share))])
        for k, share in enumerate(mode2, start=1):
            writer.writerow([2, k, repr(float(share))])

    with open(out / "effect_curves.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "hour", "measure", "mean", "plus_1sd", "minus_1sd"])
        for k in range(r1):
            curves = component_effect_curves(identified, tensor, k, info)
            for row in range(a):
                for j, measure in enumerate(curves.measures):
                    writer.writerow([
                        k + 1, int(curves.hours[row]), measure,
                        repr(float(curves.mean[row, j])),
                        repr(float(curves.plus_1sd[row, j])),
                        repr(float(curves.minus_1sd[row, j])),
                    ])
    click.echo(f"report written to {out}")


if __name__ == "__main__":
    main()
