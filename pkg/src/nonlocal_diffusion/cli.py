"""Command-line front end: ``nonlocal run | verify | info``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import _DEFAULTS, _ORACLES, CellError, ConfigError, ExperimentConfig, run_example
from .geometry import MeshError
from .kernels import KernelError, delta_crossover, fractional_constant

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_CONFIG_KEYS = {"example", "s", "delta", "h", "quad", "solver", "out", "emit_curves", "threads", "custom"}


def _fmt(v) -> str:
    # six significant digits
    return f"{float(v):.5e}"


def load_config(path, overrides: argparse.Namespace | None = None) -> ExperimentConfig:
    """Parse a JSON config file and apply command-line overrides."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "example" not in raw:
        raise ConfigError("config needs an 'example' key")
    o = overrides or argparse.Namespace()
    for key in ("s", "delta"):
        if getattr(o, key, None) is not None:
            raw[key] = getattr(o, key)
    if getattr(o, "h", None) is not None:
        raw["h"] = o.h
    if getattr(o, "out", None) is not None:
        raw["out"] = o.out
    if getattr(o, "threads", None) is not None:
        raw["threads"] = o.threads
    if getattr(o, "emit_curves", False):
        raw["emit_curves"] = True
    defaults = _DEFAULTS.get(raw["example"], {})
    quad = raw.get("quad") or {}
    solver = raw.get("solver") or {}
    try:
        return ExperimentConfig(
            example=raw["example"],
            s=raw.get("s", defaults.get("s")),
            delta=raw.get("delta", defaults.get("delta")),
            h=raw.get("h", defaults.get("h")),
            abs_tol=float(quad.get("abs_tol", 1e-12)),
            rel_tol=float(quad.get("rel_tol", 1e-10)),
            solver_tol=float(solver.get("tol", 1e-10)),
            out=str(raw.get("out", "out")),
            emit_curves=bool(raw.get("emit_curves", False)),
            threads=int(raw.get("threads", 1)),
            custom=dict(raw.get("custom") or {}),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def config_hash(config: ExperimentConfig) -> str:
    keys = ("example", "s", "delta", "h", "abs_tol", "rel_tol", "solver_tol", "custom")
    blob = json.dumps({k: getattr(config, k) for k in keys}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _finite(obj):
    # JSON has no NaN; missing values become null
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def _oracle_stats():
    out = {}
    for f, g in _ORACLES.values():
        for c in (f, g):
            out[c.name] = {"hits": c.hits, "misses": c.misses}
    return out


def write_outputs(config: ExperimentConfig, report, out: Path, total_runtime: float) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    path = out / "report.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["example", "s", "delta", "h", "l2_error", "runtime_s"])
        for r in report.rows:
            w.writerow([r["example"], _fmt(r["s"]), _fmt(r["delta"]), _fmt(r["h"]), _fmt(r["l2_error"]),
                        _fmt(r["runtime_s"])])
    files.append(path)
    path = out / "rates.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["example", "s", "rate", "r2"])
        for r in report.rates:
            w.writerow([r["example"], _fmt(r["s"]), _fmt(r["rate"]), _fmt(r["r2"])])
    files.append(path)
    cells = []
    for (s, d), cell in report.cells.items():
        entry = {"s": s, "delta": d, "h": cell.h, "l2_error": cell.l2_error, "runtime_s": cell.runtime_s,
                 "alignment": cell.alignment or "none", "n_nodes": cell.mesh.n_nodes, "r": cell.mesh.r,
                 "residual": cell.solution.residual_norm}
        if cell.solution.lambda_ is not None:
            entry["lambda"] = cell.solution.lambda_
        if cell.compatibility is not None:
            entry["compatibility_residual"] = cell.compatibility
        if cell.solution.newton_iters is not None:
            entry["newton_iters"] = cell.solution.newton_iters
        entry.update(cell.extra)
        if config.emit_curves:
            path = out / f"curve_{config.example}_s{s:g}_delta{d:g}.csv"
            np.savetxt(path, np.column_stack([cell.mesh.x, cell.solution.values]), delimiter=",",
                       header="x,u", comments="", fmt="%.5e")
            files.append(path)
            entry["curve"] = path.name
        cells.append(entry)
    manifest = {
        "version": __version__,
        "config_hash": config_hash(config),
        "example": config.example,
        "threads": config.threads,
        "total_runtime_s": total_runtime,
        "cells": cells,
        "quadrature": {"abs_tol": config.abs_tol, "rel_tol": config.rel_tol, "solver_tol": config.solver_tol},
        "oracle_cache": _oracle_stats(),
        "files": [p.name for p in files],
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(_finite(manifest), indent=2, default=float))
    return manifest


def cmd_run(args) -> int:
    try:
        config = load_config(args.config, args)
    except (ConfigError, MeshError, KernelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        report = run_example(config)
    except (ConfigError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CellError as exc:
        if isinstance(exc.cause, (MeshError, KernelError)):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = Path(config.out)
    write_outputs(config, report, out, time.perf_counter() - t0)
    for r in report.rates:
        print(f"{r['example']} s={r['s']:g}: rate {r['rate']:.3f} (r2 {r['r2']:.4f})")
    print(f"wrote {out / 'report.csv'}, {out / 'rates.csv'}, {out / 'manifest.json'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .checks import run_checks

    t0 = time.perf_counter()
    results = run_checks(corrupt_scaling=args.corrupt_scaling)
    width = max(len(r.name) for r in results)
    print(f"{'check':<{width}}  {'value':>10}  {'tol':>8}  result")
    for r in results:
        print(f"{r.name:<{width}}  {r.value:10.2e}  {r.tol:8.0e}  {'PASS' if r.passed else 'FAIL'}")
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} passed in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_info(args) -> int:
    print(f"{'s':>8}  {'delta_s':>14}  {'C_1,s':>14}")
    for s in args.s:
        try:
            ds = f"{delta_crossover(s):.12g}"
        except KernelError:
            ds = "undefined"
        cs = f"{fractional_constant(1, s):.12g}" if 0 < s < 1 else "n/a"
        print(f"{s:8g}  {ds:>14}  {cs:>14}")
    return EXIT_OK


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nonlocal", description="Nonlocal diffusion volume-constraint studies.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a study from a JSON config")
    r.add_argument("config", help="path to the JSON config")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--threads", type=int, help="worker threads across (s, delta) cells")
    r.add_argument("--emit-curves", action="store_true", help="write (x, u) CSV per cell")
    r.add_argument("--delta", type=_floats, help="comma-separated horizons")
    r.add_argument("--s", type=_floats, help="comma-separated kernel exponents")
    r.add_argument("--h", type=float, help="mesh size")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run the invariant battery")
    v.add_argument("--corrupt-scaling", type=float, default=None, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    i = sub.add_parser("info", help="print kernel constants")
    i.add_argument("--s", type=_floats, default=[-1.0, 0.25, 0.5, 0.75], help="comma-separated exponents")
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
