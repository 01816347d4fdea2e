"""``dvpd-sim`` command line.

Exit codes: 0 success, 2 validation error, 3 divergence abort.
"""

import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from ._validate import ConfigError
from .metrics import summarize
from .pdn import SimulationDiverged
from .scenario import (config_from_dict, export_report, export_trace, load_config, read_trace,
                       run_scenario, set_dotted)

EXIT_VALIDATION = 2
EXIT_DIVERGED = 3


def _fail(msg, code):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        _fail(str(exc), EXIT_VALIDATION)


@click.group()
def main():
    """Distributed vertical power delivery fault simulator."""


@main.command()
@click.option("--config", "config_path", required=True, help="Scenario JSON or bundled config name.")
def validate(config_path):
    """Check a scenario without running it."""
    cfg = _load(config_path)
    click.echo(f"ok: {cfg.vr_count} VRs, {cfg.n_steps} steps of {cfg.simulation.dt:g} s, "
               f"{len(cfg.faults)} fault(s)")


@main.command()
@click.option("--config", "config_path", required=True, help="Scenario JSON or bundled config name.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--full-rate", is_flag=True, help="Log every integration step.")
@click.option("--seedless", is_flag=True, help="Disable sensor noise; no random numbers are drawn.")
def run(config_path, out_dir, full_rate, seedless):
    """Run one scenario and write trace.csv and report.json."""
    cfg = _load(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        trace, report = run_scenario(cfg, full_rate=full_rate, seedless=seedless)
    except SimulationDiverged as exc:
        if exc.trace is not None:
            export_trace(exc.trace, out / "trace.csv")
        _fail(f"{exc}; partial trace written to {out / 'trace.csv'}", EXIT_DIVERGED)
    export_trace(trace, out / "trace.csv")
    export_report(report, out / "report.json")
    click.echo(f"wrote {out / 'trace.csv'} ({len(trace.t)} rows) and {out / 'report.json'}")


@main.command()
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, help="Config the trace was produced with.")
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False), help="Report JSON path.")
def report(trace_path, config_path, out_path):
    """Recompute the summary report from an existing trace."""
    cfg = _load(config_path)
    try:
        trace = read_trace(trace_path, cfg)
    except ConfigError as exc:
        _fail(str(exc), EXIT_VALIDATION)
    rep = summarize(trace, cfg.faults, cfg.output.efficiency_window, cfg.output.degradation_span,
                    cfg.fuses.trip_delay)
    if out_path:
        export_report(rep, out_path)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(json.dumps(rep.to_dict(), indent=2, sort_keys=True, default=str))


def _sweep_point(args):
    raw, point, out_dir, idx = args
    data = raw
    for key, value in point.items():
        data = set_dotted(data, key, value)
    row = {"index": idx, **point}
    try:
        cfg = config_from_dict(data)
        trace, rep = run_scenario(cfg)
    except ConfigError as exc:
        return {**row, "status": "invalid", "error": str(exc)}
    except SimulationDiverged as exc:
        return {**row, "status": "diverged", "error": str(exc)}
    export_report(rep, Path(out_dir) / f"point_{idx:04d}.json")
    return {
        **row, "status": "ok",
        "false_positive_count": rep.false_positive_count,
        "detection_latency_us": rep.detection_latency_us,
        "baseline_efficiency_pct": rep.baseline_efficiency_pct,
    }


def worker_count(requested):
    cap = os.environ.get("DVPD_SIM_THREADS")
    n = requested
    if cap:
        try:
            n = min(n, max(int(cap), 1))
        except ValueError:
            _fail(f"DVPD_SIM_THREADS must be an integer, got {cap!r}", EXIT_VALIDATION)
    return max(n, 1)


@main.command()
@click.option("--config", "config_path", required=True, help="Base scenario.")
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON object mapping dotted config keys to value lists.")
@click.option("--workers", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--out", "out_dir", default="sweep_out", show_default=True, type=click.Path(file_okay=False))
def sweep(config_path, grid_path, workers, out_dir):
    """Run the Cartesian product of a parameter grid."""
    cfg = _load(config_path)
    try:
        grid = json.loads(Path(grid_path).read_text())
    except json.JSONDecodeError as exc:
        _fail(f"{grid_path}: {exc.msg}", EXIT_VALIDATION)
    if not isinstance(grid, dict) or not all(isinstance(v, list) and v for v in grid.values()):
        _fail(f"{grid_path}: grid must map keys to non-empty lists", EXIT_VALIDATION)
    keys = sorted(grid)
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg.raw, p, str(out), i) for i, p in enumerate(points)]
    n = worker_count(workers)
    if n == 1:
        rows = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    (out / "sweep.json").write_text(json.dumps(rows, indent=2, sort_keys=True, default=str) + "\n")
    bad = sum(r["status"] != "ok" for r in rows)
    click.echo(f"{len(rows)} point(s), {bad} not ok; summary in {out / 'sweep.json'}")


if __name__ == "__main__":
    main()
