"""Harness entry points: emit fixture suites, compare stored arrays."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .fixtures import compare, emit_fixtures


def cmd_emit(args) -> int:
    paths = emit_fixtures(args.out, seed=args.seed)
    for p in paths:
        print(p)
    print(f"emitted {len(paths)} fixtures")
    return 0


def cmd_compare(args) -> int:
    with np.load(args.actual, allow_pickle=False) as archive:
        actual = {k: archive[k] for k in archive.files}
    report = compare(args.fixture, actual)
    for key, stats in report["per_key"].items():
        flag = "PASS" if stats["passed"] else "FAIL"
        print(f"{flag} {report['case']}:{key} max_abs={stats['max_abs']:.3e} "
              f"max_rel={stats['max_rel']:.3e} tol={stats['tol']:.1e}")
    return 0 if report["passed"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="oracle-harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("emit", help="write the golden fixture suite")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("compare", help="compare an .npz of actuals against a fixture")
    p.add_argument("--fixture", required=True)
    p.add_argument("--actual", required=True)
    p.set_defaults(func=cmd_compare)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
