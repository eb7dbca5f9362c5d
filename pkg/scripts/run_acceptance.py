#!/usr/bin/env python3
"""Run the acceptance suite and print one PASS/FAIL line per criterion.

Usage: python3 scripts/run_acceptance.py [--fast]

``--fast`` skips the two Monte Carlo criteria (2 and 3).  Exit status is
pytest's: 0 when every selected criterion passes.
"""
import argparse
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fast", action="store_true", help="skip the slow Monte Carlo criteria")
    args = ap.parse_args()
    argv = [str(ROOT / "tests" / "test_acceptance.py"), "-q", "-rN", "--no-header"]
    if args.fast:
        argv += ["-m", "not slow"]
    return int(pytest.main(argv))


if __name__ == "__main__":
    sys.exit(main())
