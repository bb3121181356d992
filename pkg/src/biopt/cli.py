"""Benchmark command line: run drivers, fit empirical rates, verify traces."""

from __future__ import annotations

import concurrent.futures
import json
import os
import sys

import click
import numpy as np

from .config import BioptError
from .driver import RunTrace, rate_fit, run, verify_trace
from .problems import build_builtin, load_instance

USAGE_EXIT = 2
SOLVER_EXIT = 1


def _load_config(path: str) -> list[dict]:
    with open(path) as fh:
        cfg = json.load(fh)
    if isinstance(cfg, dict) and "runs" in cfg:
        cfg = cfg["runs"]
    if isinstance(cfg, dict):
        cfg = [cfg]
    if not isinstance(cfg, list) or not all(isinstance(c, dict) for c in cfg):
        raise ValueError("config must be an object or a list of objects")
    return cfg


def _build_instance(spec, seed: int):
    if isinstance(spec, str):
        return build_builtin(spec, seed=seed)
    if isinstance(spec, dict) and "file" in spec:
        return load_instance(spec["file"])
    raise ValueError("instance must be a builtin name or {\"file\": path}")


def _validate(cfg: dict) -> dict:
    mode = cfg.get("mode", "exact")
    p = int(cfg.get("p", 3))
    beta = float(cfg.get("beta", 0.0))
    if mode not in ("exact", "inexact", "superfast"):
        raise ValueError(f"unknown mode {mode!r}")
    if p < 1 or (mode == "superfast" and p < 2):
        raise ValueError("p must be >= 1 (>= 2 for superfast mode)")
    if mode != "exact" and not 0.0 <= beta <= 3.0 / (3 * p + 2):
        raise ValueError("beta out of range [0, 3/(3p+2)]")
    if mode == "inexact" and cfg.get("H") is None:
        raise ValueError("inexact mode needs H")
    return {"mode": mode, "p": p, "beta": beta}


def _run_one(cfg: dict) -> str:
    checked = _validate(cfg)
    seed = int(os.environ.get("BIOPT_SEED", cfg.get("seed", 0)))
    instance = _build_instance(cfg.get("instance", "example1d"), seed)
    x0 = cfg.get("x0")
    trace = run(
        instance, checked["mode"], p=checked["p"], beta=checked["beta"],
        H=cfg.get("H"), M_next=cfg.get("M_next"),
        budget=int(cfg.get("budget", 200)), epsilon=cfg.get("epsilon"),
        R=cfg.get("R"), x0=None if x0 is None else np.asarray(x0, dtype=float),
        coeff_factor=float(cfg.get("coeff_factor", 0.25)))
    if cfg.get("trace"):
        trace.write_ndjson(cfg["trace"])
    if cfg.get("summary"):
        trace.write_csv(cfg["summary"])
    last = trace.records[-1]
    gap = last.get("gap_cert")
    total_lower = sum(r.get("lower_iters") or 0 for r in trace.records)
    total_bis = sum(r.get("bisections") or 0 for r in trace.records)
    return (f"{instance.name} {checked['mode']} status={trace.status} "
            f"k={last['k']} gap={'n/a' if gap is None else '%.6e' % gap} "
            f"lower_iters={total_lower} bisections={total_bis}")


@click.group()
def main():
    """Composite-minimization benchmark harness."""


@main.command("run")
@click.option("-c", "--config", "config_path", required=True,
              type=click.Path(), help="JSON config (single run or list).")
@click.option("--jobs", default=1, show_default=True,
              help="Run independent configs in parallel.")
def cmd_run(config_path, jobs):
    """Run driver(s) described by a config file and write traces."""
    try:
        configs = _load_config(config_path)
        for cfg in configs:
            _validate(cfg)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(USAGE_EXIT)
    try:
        if jobs > 1 and len(configs) > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
                for line in ex.map(_run_one, configs):
                    click.echo(line)
        else:
            for cfg in configs:
                click.echo(_run_one(cfg))
    except (BioptError, AssertionError) as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(SOLVER_EXIT)
    except (OSError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(USAGE_EXIT)


@main.command("rate-fit")
@click.argument("trace_path", type=click.Path())
@click.option("--kmin", default=10, show_default=True)
@click.option("--kmax", default=200, show_default=True)
def cmd_rate_fit(trace_path, kmin, kmax):
    """Fit the empirical convergence-rate exponent of a trace."""
    try:
        trace = RunTrace.from_ndjson(trace_path)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        click.echo(f"trace error: {exc}", err=True)
        sys.exit(USAGE_EXIT)
    try:
        slope, warnings = rate_fit(trace, kmin, kmax)
    except BioptError as exc:
        click.echo(f"rate-fit error: {exc}", err=True)
        sys.exit(USAGE_EXIT)
    for w in warnings:
        click.echo(f"warning: {w}", err=True)
    click.echo(f"slope={slope:.6f}")


@main.command("verify")
@click.argument("trace_path", type=click.Path())
def cmd_verify(trace_path):
    """Replay recorded per-iteration invariants and report pass/fail."""
    try:
        trace = RunTrace.from_ndjson(trace_path)
        if not trace.records:
            raise ValueError("trace has no iteration records")
        report = verify_trace(trace)
    except (OSError, json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        click.echo(f"trace error: {exc}", err=True)
        sys.exit(USAGE_EXIT)
    failed = False
    for name, res in sorted(report.items()):
        mark = "pass" if res["ok"] else f"FAIL at k={res['violations'][:5]}"
        click.echo(f"{name}: {mark}")
        failed = failed or not res["ok"]
    if failed:
        sys.exit(SOLVER_EXIT)


if __name__ == "__main__":
    main()
