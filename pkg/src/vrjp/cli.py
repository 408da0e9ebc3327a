"""Command line front door: phase queries, experiment runs, verification.

stdout carries machine-readable JSON only; anything meant for a human
(tables, warnings, error diagnostics) goes to stderr. Exit codes: 0 pass,
1 assertion failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments, verify
from .phase import SolverError, classify, critical_weight


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrjp",
        description="Reinforced-walk martingale toolkit: phase diagram, "
                    "replica experiments, acceptance battery.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_phase = sub.add_parser("phase", help="phase-diagram quantities as JSON")
    p_phase.add_argument("--m", type=float, required=True,
                         help="offspring mean, must exceed 1")
    group = p_phase.add_mutually_exclusive_group(required=True)
    group.add_argument("--w", type=float, help="absolute edge weight")
    group.add_argument("--w-rel", type=float, dest="w_rel",
                       help="edge weight as a multiple of the critical one")

    p_exp = sub.add_parser("experiment", help="run a replica experiment spec")
    p_exp.add_argument("--spec", required=True, help="path to a spec JSON file")
    p_exp.add_argument("--out", required=True, help="output directory")
    p_exp.add_argument("--threads", type=int, default=1)

    p_ver = sub.add_parser("verify", help="run the acceptance battery")
    p_ver.add_argument("--suite", choices=verify.SUITES, required=True)
    p_ver.add_argument("--threads", type=int, default=4)
    return parser


def _cmd_phase(args) -> int:
    try:
        summary = classify(args.m, args.w if args.w is not None
                           else args.w_rel * critical_weight(args.m))
    except (ValueError, SolverError) as exc:
        print(f"phase: {exc}", file=sys.stderr)
        return 2
    doc = {
        "w_c": summary.critical_weight,
        "t_star": summary.tilt,
        "tau": summary.decay_rate,
        "alpha": summary.critical_slope,
        "sigma2": summary.step_variance,
        "rho_c": summary.cube_root_rate,
        "regime": summary.regime,
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_experiment(args) -> int:
    if args.threads < 1:
        print("experiment: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        spec = experiments.load_spec(args.spec)
    except experiments.SpecError as exc:
        print(f"experiment: {exc}", file=sys.stderr)
        return 2
    try:
        summary = experiments.run_to_dir(spec, args.out, threads=args.threads)
    except experiments.SpecError as exc:
        print(f"experiment: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"experiment: cannot write outputs: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(summary, indent=2, sort_keys=True))
    for row in summary["assertions"]:
        flag = "ok  " if row["pass"] else "FAIL"
        print(f"  {flag} {row['name']}", file=sys.stderr)
    return 0 if summary["passed"] else 1


def _cmd_verify(args) -> int:
    if args.threads < 1:
        print("verify: --threads must be at least 1", file=sys.stderr)
        return 2
    return verify.main_verify(args.suite, args.threads)


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    if args.subcommand == "phase":
        return _cmd_phase(args)
    if args.subcommand == "experiment":
        return _cmd_experiment(args)
    return _cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
