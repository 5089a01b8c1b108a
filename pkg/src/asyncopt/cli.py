"""Command-line interface.

Subcommands:
  run <config.json>   execute an experiment matrix, write CSV/JSON/figures
  verify [--only X]   run the claim-verification battery
  stats <delays.csv>  print exact delay statistics as JSON
  lowerbound          build + simulate a fixed-stepsize lower-bound case
  gen-delays <model>  generate a delay sequence file

The env var ASYNC_OPT_SEED overrides the base seed of `run` configs and the
`verify` battery.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .bounds import simulate_fixed_stepsize, small_stepsize_lower_bound, staircase_lower_bound
from .checks import CHECKS, run_checks
from .delays import (
    WorkerSchedule,
    compute_stats,
    constant_delay,
    half_outlier,
    load_delays,
    one_fast_machine,
    save_delays,
    simulate_workers,
    staircase_adversarial,
)
from .errors import ConfigurationError, ParameterError
from .harness import SEED_ENV_VAR, load_config, run_experiment


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = run_experiment(
        config, args.outdir,
        workers=args.workers,
        render_figures=not args.no_figures,
    )
    print(json.dumps({"name": summary["name"], "outdir": str(args.outdir),
                      "cells": sum(m["n_seeds"] for m in summary["methods"]),
                      "errors": summary["errors"]}, indent=2))
    return 0 if summary["errors"] == 0 else 1


def _cmd_verify(args) -> int:
    seed = int(os.environ.get(SEED_ENV_VAR, 0))
    names = [args.only] if args.only else None
    try:
        results = run_checks(names, seed=seed)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if all(r.passed for r in results) else 1


def _cmd_stats(args) -> int:
    seq = load_delays(args.delays)
    print(json.dumps(compute_stats(seq).to_json(), indent=2))
    return 0


def _cmd_lowerbound(args) -> int:
    threshold = 6.0 / (args.beta * (1 + args.taumax))
    if args.eta > threshold:
        lb = staircase_lower_bound(args.T, args.taumax, args.beta, args.w1, args.eta)
        sim = simulate_fixed_stepsize(lb.problem, lb.delays, args.w1, args.eta)
        report = {
            "construction": "staircase",
            "grad_sq_avg": sim.grad_sq_avg,
            "grad_sq_avg_bound": lb.grad_sq_avg_bound,
            "subopt_avg": sim.subopt_avg,
            "subopt_avg_bound": lb.subopt_avg_bound,
        }
    else:
        import numpy as np

        from .delays import DelaySequence

        lb = small_stepsize_lower_bound(args.T, args.beta, args.eta, args.w1)
        zero = DelaySequence(np.zeros(args.T, dtype=np.int64))
        sim = simulate_fixed_stepsize(lb.problem, zero, args.w1, args.eta)
        report = {
            "construction": "small_stepsize",
            "note": f"eta <= 6/(beta (1+taumax)) = {threshold:g}; using the stepsize-limited case",
            "epsilon": lb.epsilon,
            "grad_sq_avg": sim.grad_sq_avg,
            "grad_sq_avg_bound": lb.grad_sq_avg_bound,
            "subopt_avg": sim.subopt_avg,
            "subopt_avg_bound": lb.subopt_avg_bound,
        }
    report["holds"] = (report["grad_sq_avg"] >= report["grad_sq_avg_bound"]
                       and report["subopt_avg"] >= report["subopt_avg_bound"])
    print(json.dumps(report, indent=2))
    return 0 if report["holds"] else 1


def _cmd_gen_delays(args) -> int:
    seed = int(os.environ.get(SEED_ENV_VAR, args.seed))
    if args.model == "constant":
        seq = constant_delay(args.T, args.tau)
    elif args.model == "staircase":
        seq = staircase_adversarial(args.T, args.taumax)
    elif args.model == "half_outlier":
        seq = half_outlier(args.T)
    elif args.model == "one_fast_machine":
        seq = one_fast_machine(args.n, args.machines)
    elif args.model == "workers":
        schedule = WorkerSchedule(machines=args.machines, rate=args.rate, seed=seed)
        seq = simulate_workers(args.T, schedule)
    else:  # pragma: no cover - argparse restricts choices
        raise ParameterError(f"unknown model {args.model!r}")
    save_delays(seq, args.output)
    print(f"wrote {seq.T} delays to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asyncopt",
        description="Asynchronous stochastic optimization under arbitrary delays.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument("-o", "--outdir", default="asyncopt_out", help="output directory")
    p_run.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_run.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_run.set_defaults(fn=_cmd_run)

    p_verify = sub.add_parser("verify", help="run the claim-verification battery")
    p_verify.add_argument("--only", choices=sorted(CHECKS), help="run a single check")
    p_verify.set_defaults(fn=_cmd_verify)

    p_stats = sub.add_parser("stats", help="exact stats of a delay file (CSV or JSON)")
    p_stats.add_argument("delays", help="path to a delay file")
    p_stats.set_defaults(fn=_cmd_stats)

    p_lb = sub.add_parser("lowerbound", help="build and simulate a lower-bound case")
    p_lb.add_argument("--T", type=int, required=True)
    p_lb.add_argument("--taumax", type=int, required=True)
    p_lb.add_argument("--beta", type=float, required=True)
    p_lb.add_argument("--eta", type=float, required=True)
    p_lb.add_argument("--w1", type=float, default=1.0)
    p_lb.set_defaults(fn=_cmd_lowerbound)

    p_gen = sub.add_parser("gen-delays", help="generate a delay sequence file")
    p_gen.add_argument("model", choices=["constant", "staircase", "half_outlier",
                                         "one_fast_machine", "workers"])
    p_gen.add_argument("--T", type=int, default=100)
    p_gen.add_argument("--tau", type=int, default=0, help="constant: delay value")
    p_gen.add_argument("--taumax", type=int, default=1, help="staircase: maximal delay")
    p_gen.add_argument("--n", type=int, default=1, help="one_fast_machine: fast-round count")
    p_gen.add_argument("--machines", type=int, default=2)
    p_gen.add_argument("--rate", type=float, default=4.06, help="workers: base Poisson rate")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("-o", "--output", required=True)
    p_gen.set_defaults(fn=_cmd_gen_delays)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
