"""Command line entry point: ``scenerylab <experiment> --config FILE --out DIR``.

Exit status is 0 on success, 1 on a runtime failure, 2 on a configuration
error and 3 when an experiment refuses its input (precision budget or
separation condition).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, is_dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .beta import PrecisionError
from .cache import MeasureCache
from .config import KINDS, ConfigError, ExperimentConfig, parse_config, parse_map
from .experiments import (
    ExperimentReport,
    SeparationError,
    dissonance_experiment,
    entropy_dimension,
    normality_experiment,
    projection_experiment,
)
from .ifs import arithmetic_independence_gap
from .measure import MapMixture, discretize, sample_points
from .metrics import GroundCache, shannon_entropy
from .scenery import (
    half_ball_mass,
    prop31_certificate,
    scenery_track,
    shift_invariance_diagnostic,
    spectral_phase_diagnostic,
    tangent_decomposition,
    uniform_scaling_statistic,
)

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_REFUSED = 0, 1, 2, 3


def _jsonable(value):
    if is_dataclass(value) and not isinstance(value, type):
        return _jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, Fraction):
        return str(value)
    return value


# ---------------------------------------------------------------------------
# experiment runners; each returns (rows, summary)


def _run_discretize(cfg, ctx):
    mu = ctx.discretize(cfg.system, cfg.params["depth"])
    ctx.measure = mu
    idx = mu.index.reshape(len(mu), -1)
    rows = [{"depth": mu.level, **{f"cell{a}": int(i) for a, i in enumerate(ix)}, "mass": float(m)}
            for ix, m in zip(idx, mu.mass)]
    summary = {"cells": len(mu), "entropy": shannon_entropy(mu), "entropy_dimension": entropy_dimension(mu).slope}
    return rows, summary


def _run_scenery(cfg, ctx):
    p = cfg.params
    x = p["x"][0] if cfg.system.dim == 1 else np.array(p["x"])
    scales = [k * p["t0"] for k in range(1, p["T"] + 1)] if p["t0"] else list(range(1, p["T"] + 1))
    track = scenery_track(cfg.system, x, scales, p["level"])
    for t, fr in zip(track.scales, track.frames):
        ctx.rows.append({"scale": float(t), "level": fr.level, "cells": len(fr), "entropy": shannon_entropy(fr),
                         "half_ball_mass": half_ball_mass(fr)})
    summary = {"frames": len(track.frames)}
    if p["shift"]:
        summary["shift_diagnostic"] = shift_invariance_diagnostic(cfg.system, x, p["T"], p["shift"], p["level"])
    if p["alpha"] is not None:
        summary["phase_modulus"] = spectral_phase_diagnostic(cfg.system, x, p["t0"] or 1.0, p["alpha"], p["T"],
                                                             p["level"])
    return ctx.rows, summary


def _run_uniform_scaling(cfg, ctx):
    p = cfg.params
    Ts = sorted(p["T"])
    points = sample_points(cfg.system, p["point_count"], cfg.seed)
    scales = range(1, Ts[-1] + 1)
    with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
        tracks = list(pool.map(lambda x: scenery_track(cfg.system, x, scales, p["level"]), points))
    ground = GroundCache()
    means = []
    for T in Ts:
        stat = uniform_scaling_statistic(cfg.system, points, T, p["level"], ground=ground, tracks=tracks)
        means.append(stat.mean)
        n = len(points)
        for i in range(n):
            for j in range(i + 1, n):
                ctx.rows.append({"T": T, "point_i": i, "point_j": j, "level": p["level"],
                                 "distance": float(stat.matrix[i, j])})
    summary = {
        "T": Ts,
        "means": means,
        "decreasing": bool(all(b < a for a, b in zip(means, means[1:]))),
        "ratio_last_first": means[-1] / means[0] if means[0] > 0 else None,
        "halved": bool(means[-1] < 0.5 * means[0]),
    }
    return ctx.rows, summary


def _run_prop31(cfg, ctx):
    p = cfg.params
    if p["mixture"] == "identity":
        nu = MapMixture.identity(cfg.system.dim)
        extra = {}
    else:
        x = p["x"][0] if cfg.system.dim == 1 else np.array(p["x"])
        td = tangent_decomposition(cfg.system, x, p["t"], p["tangent_level"])
        nu = td.mixture
        extra = {"ratio_min": td.ratio_min, "ratio_max": td.ratio_max, "atoms": len(td.words)}
    rep = prop31_certificate(cfg.system, nu, p["n"], p["alpha"], samples=p["samples"], seed=cfg.seed,
                             frame_level=p["frame_level"])
    summary = {k: v for k, v in asdict(rep).items() if k != "rows"}
    summary.update(extra)
    return rep.rows, summary


def _run_dissonance(cfg, ctx):
    other = cfg.system2 if cfg.system2 is not None else cfg.system
    p = cfg.params
    rep = dissonance_experiment(cfg.system, other, p["depth"], p["word_bound"], p["multiplier_bound"],
                                p["tolerance"], discretizer=ctx.discretize)
    return rep.rows, rep.summary


def _run_normality(cfg, ctx):
    p = cfg.params
    h = parse_map(p["h"], cfg.system.domain) if p["h"] else None
    rep = normality_experiment(cfg.system, h, p["beta"], p["point_count"], p["orbit_length"], p["precision_bits"],
                               seed=cfg.seed, checkpoints=p["checkpoints"], word_bound=p["word_bound"],
                               multiplier_bound=p["multiplier_bound"])
    return rep.rows, rep.summary


def _run_projection(cfg, ctx):
    p = cfg.params
    thetas = [math.radians(t) for t in p["thetas"]]
    rep = projection_experiment(cfg.system, thetas, p["depth"], p["radii"], p["point_count"], cfg.seed,
                                p["strip_level"], p["tolerance"], p["word_bound"], p["multiplier_bound"],
                                discretizer=ctx.discretize)
    return rep.rows, rep.summary


def _run_gap(cfg, ctx):
    p = cfg.params
    mode = p["mode"]
    if mode == "ifs-vs-beta":
        from .beta import parse_beta

        other = float(parse_beta(p["beta"], 64))
    else:
        other = cfg.system2
    res = arithmetic_independence_gap(mode, cfg.system, other, p["word_bound"], p["multiplier_bound"])
    rows = [{"word_bound": p["word_bound"], "multiplier_bound": p["multiplier_bound"], "gap": res.gap}]
    if res.doubled_gap is not None:
        rows.append({"word_bound": 2 * p["word_bound"], "multiplier_bound": 2 * p["multiplier_bound"],
                     "gap": res.doubled_gap})
    summary = {"gap": res.gap, "pair": [list(w) if isinstance(w, tuple) else w for w in res.pair],
               "shrank": res.shrank, "doubled_gap": res.doubled_gap}
    return rows, summary


RUNNERS = {
    "discretize": _run_discretize,
    "scenery": _run_scenery,
    "uniform-scaling": _run_uniform_scaling,
    "prop31": _run_prop31,
    "dissonance": _run_dissonance,
    "normality": _run_normality,
    "projection": _run_projection,
    "gap": _run_gap,
}


class _Context:
    def __init__(self, threads: int, cache: MeasureCache | None):
        self.threads = max(1, int(threads))
        self.cache = cache
        self.rows: list = []
        self.measure = None

    def discretize(self, system, depth, **kwargs):
        if self.cache is None:
            return discretize(system, depth, **kwargs)
        return self.cache.discretize(system, depth, **kwargs)


def run_experiment(config: ExperimentConfig, threads: int = 1, cache_dir=None) -> ExperimentReport:
    """Run the configured experiment.

    Refusals (:class:`PrecisionError`, :class:`SeparationError`) propagate.
    Other failures are recorded in ``summary["error"]`` with the rows
    gathered so far.
    """
    ctx = _Context(threads, MeasureCache(cache_dir) if cache_dir else None)
    report = ExperimentReport(config.kind, _jsonable(config.canonical()), config.seed)
    report.config["hash"] = config.digest()
    try:
        rows, summary = RUNNERS[config.kind](config, ctx)
        report.rows, report.summary = rows, summary
        report.summary["status"] = "ok"
    except (PrecisionError, SeparationError):
        raise
    except Exception as exc:  # recorded, not swallowed: the caller sees status "error"
        report.rows = ctx.rows
        report.summary = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
    report._measure = ctx.measure
    return report


# ---------------------------------------------------------------------------
# output


def rows_csv(report: ExperimentReport) -> str:
    """Comma-separated rows with provenance columns first."""
    columns = ["experiment", "seed"]
    for row in report.rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in report.rows:
        rec = {"experiment": report.name, "seed": report.seed}
        rec.update({k: _csv_value(v) for k, v in row.items()})
        writer.writerow(rec)
    return buf.getvalue()


def _csv_value(v):
    v = _jsonable(v)
    return repr(v) if isinstance(v, float) else v


def report_json(report: ExperimentReport, include_rows: bool = True) -> str:
    rec = {"name": report.name, "config": report.config, "seed": report.seed, "summary": report.summary}
    if include_rows:
        rec["rows"] = report.rows
    return json.dumps(_jsonable(rec), sort_keys=True, indent=2) + "\n"


def _atomic_write(path: Path, data):
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    with os.fdopen(fd, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_report(report: ExperimentReport, out_dir) -> dict:
    """Write ``report.json`` and ``rows.csv`` (plus ``measure.dyad`` for discretize)."""
    from .cache import encode_measure

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.json", "rows": out / "rows.csv"}
    _atomic_write(paths["report"], report_json(report))
    _atomic_write(paths["rows"], rows_csv(report))
    mu = getattr(report, "_measure", None)
    if mu is not None:
        paths["measure"] = out / "measure.dyad"
        _atomic_write(paths["measure"], encode_measure(mu))
    return paths


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenerylab", description="Scenery and dimension experiments for IFS measures.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--seed", type=int, help="seed (overrides the configuration)")
        p.add_argument("--format", choices=("rows", "structured"), help="what to print on stdout")
        p.add_argument("--threads", type=int, default=1, help="worker threads for per-point tasks")
        p.add_argument("--cache", help="directory for cached discretizations")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text, kind=args.command)
    except ConfigError as exc:
        for issue in exc.issues:
            print(f"{args.config}: {issue}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    fmt = args.format or cfg.output_format
    out_dir = args.out or cfg.output_dir
    try:
        report = run_experiment(cfg, threads=args.threads, cache_dir=args.cache)
        status = EXIT_OK if report.summary.get("status") == "ok" else EXIT_FAILURE
    except PrecisionError as exc:
        report = ExperimentReport(cfg.kind, _jsonable(cfg.canonical()), cfg.seed,
                                  summary={"status": "refused", "error": str(exc), "required_bits": exc.required_bits})
        report.config["hash"] = cfg.digest()
        status = EXIT_REFUSED
    except SeparationError as exc:
        report = ExperimentReport(cfg.kind, _jsonable(cfg.canonical()), cfg.seed,
                                  summary={"status": "refused", "error": str(exc), "witness": list(exc.witness)})
        report.config["hash"] = cfg.digest()
        status = EXIT_REFUSED
    if out_dir:
        write_report(report, out_dir)
    print(f"config hash {report.config['hash']}", file=sys.stderr)
    if status != EXIT_OK:
        print(f"{report.summary['status']}: {report.summary.get('error')}", file=sys.stderr)
    sys.stdout.write(rows_csv(report) if fmt == "rows" else report_json(report))
    return status


if __name__ == "__main__":
    sys.exit(main())
