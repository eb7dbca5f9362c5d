"""Command line front end: ``spdeweak run CONFIG``, ``spdeweak describe NAME``, ``spdeweak version``.

Exit codes: 0 success, 1 usage or configuration error, 2 an acceptance
threshold failed, 3 a run diverged or too many samples aborted.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, load_config
from .errors import (
    ConfigError,
    DivergenceError,
    EstimationDegraded,
    InsufficientData,
    InvalidArgument,
    InvalidOperator,
    InvalidRefinement,
    UnsupportedOracle,
)
from .experiments import describe, run_experiment

OUTPUT_ENV = "SPDEWEAK_OUTPUT_DIR"
SCHEMA_VERSION = 1

EXIT_OK, EXIT_USAGE, EXIT_ACCEPTANCE, EXIT_DIVERGED = 0, 1, 2, 3


def git_describe() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def cmd_run(path: str) -> int:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(os.environ.get(OUTPUT_ENV) or cfg.output.directory)
    t0 = time.perf_counter()
    try:
        result = run_experiment(cfg)
    except (DivergenceError, EstimationDegraded) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InvalidArgument, InvalidRefinement, InvalidOperator, UnsupportedOracle, InsufficientData) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    wall = time.perf_counter() - t0
    outdir.mkdir(parents=True, exist_ok=True)
    fmts = set(cfg.output.formats)
    if "csv" in fmts:
        (outdir / "results.csv").write_text(result.csv)
    if "json" in fmts:
        summary = {
            "schema_version": SCHEMA_VERSION,
            "experiment": cfg.experiment,
            "passed": result.passed,
            "acceptance": result.acceptance,
            "results": result.results,
            "config": cfg.to_dict(),
            "build": {"version": __version__, "git_describe": git_describe()},
            "timing": {"wall_seconds": wall},
        }
        (outdir / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    if "svg" in fmts and result.svg is not None:
        (outdir / "plot.svg").write_text(result.svg)
    for name, c in result.acceptance.items():
        flag = "PASS" if c["passed"] else "FAIL"
        print(f"{flag} {name}: value={_jsonable(c['value'])} threshold={_jsonable(c['threshold'])}")
    print(f"wrote {outdir} in {wall:.2f} s")
    return EXIT_OK if result.passed else EXIT_ACCEPTANCE


def cmd_describe(name: str) -> int:
    try:
        print(describe(name))
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spdeweak", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a YAML config")
    r.add_argument("config")
    d = sub.add_parser("describe", help=f"explain an experiment ({', '.join(EXPERIMENTS)})")
    d.add_argument("name")
    sub.add_parser("version", help="print the package version and build")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "describe":
        return cmd_describe(args.name)
    print(f"spdeweak {__version__} ({git_describe()})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
