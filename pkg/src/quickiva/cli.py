"""Command-line entry point: ``quickiva run`` and ``quickiva selftest``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from . import selftest
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment

# flag name -> config field
OVERRIDES = {
    "algorithm": "algorithms",
    "score": "score",
    "trials": "trials",
    "seed": "seed",
    "out": "out",
    "workers": "workers",
    "tol": "tol",
    "max_iter": "max_iter",
    "mu": "mu",
    "hessian": "hessian",
    "iterations": "iterations",
    "K": "K",
    "d": "d",
    "T": "T",
    "n_block": "n_block",
    "alpha": "alpha",
    "init": "init",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quickiva", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo experiment")
    run.add_argument("--config", help="JSON file with ExperimentConfig fields; flags take precedence")
    run.add_argument("--experiment", choices=[e for e in EXPERIMENTS if e != "selftest"])
    run.add_argument("--algorithm", action="append", help="algorithm id (repeatable)")
    run.add_argument("--score", choices=["rational", "norm"])
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--workers", type=int, help="worker processes (0 = all cores)")
    run.add_argument("--tol", type=float)
    run.add_argument("--max-iter", dest="max_iter", type=int)
    run.add_argument("--mu", type=float, help="gradient baseline step size")
    run.add_argument("--hessian", choices=["exact", "approx"])
    run.add_argument("--iterations", type=int, help="iteration budget for separation")
    run.add_argument("--K", type=int)
    run.add_argument("--d", type=int)
    run.add_argument("--T", type=int)
    run.add_argument("--n-block", dest="n_block", type=int)
    run.add_argument("--alpha", type=float)
    run.add_argument("--init", choices=["near_ideal", "random"])

    st = sub.add_parser("selftest", help="run the oracle checks")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--full", action="store_true", help="use acceptance-size sample counts")
    st.add_argument("--mutate", choices=["hessian-sign"], help=argparse.SUPPRESS)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if args.config:
        with open(args.config) as fh:
            values.update(json.load(fh))
    for flag, name in OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    experiment = args.experiment or values.pop("experiment", "extraction")
    values.pop("experiment", None)
    return ExperimentConfig.for_experiment(experiment, **values)


def cmd_run(args) -> int:
    try:
        cfg = config_from_args(args)
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"quickiva: configuration error: {exc}", file=sys.stderr)
        return 2
    summary = run_experiment(cfg)
    for alg, s in summary["algorithms"].items():
        brief = {k: v for k, v in s.items() if not isinstance(v, list)}
        print(alg, json.dumps(brief))
    print(f"results written to {cfg.out}")
    return 0


def cmd_selftest(args) -> int:
    sign = -1.0 if args.mutate == "hessian-sign" else 1.0
    checks = selftest.run_all(seed=args.seed, hessian_sign=sign, quick=not args.full)
    width = max(len(c.name) for c in checks)
    print(f"selftest seed={args.seed}")
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status}  {c.name:<{width}}  error={c.error:.3e}  tol={c.tol:.1e}")
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "run":
        return cmd_run(args)
    return cmd_selftest(args)


if __name__ == "__main__":
    sys.exit(main())
