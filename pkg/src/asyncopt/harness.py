"""Experiment configuration, execution matrix, metric aggregation, reporting.

A JSON config describes one problem, one delay model, and a list of methods;
the harness runs every (method, seed) cell, writes one metrics.csv row per
cell, a summary.json with per-method aggregates, optional per-round logs, and
report figures.  Cells are independent and deterministic given (config,
seed), so parallel execution reproduces the serial output bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import bounds, engine, figures
from .delays import (
    DelaySequence,
    WorkerSchedule,
    compute_stats,
    constant_delay,
    half_outlier,
    load_delays,
    one_fast_machine,
    simulate_workers,
    staircase_adversarial,
)
from .errors import ConfigurationError, ScheduleError
from .minibatch import Strictness, derive_schedule, run_minibatched
from .optimizers import (
    OptimizerOutput,
    VanillaAsyncSgd,
    acsa_accelerated,
    psgd_convex_lipschitz,
    sgd_convex_smooth,
    sgd_nonconvex,
)
from .problems import GradientOracle, initial_distance, initial_gap, problem_from_config
from .sweep import make_schedule, run_adaptive_sweep, sweep_rate_envelope

METRIC_COLUMNS = [
    "seed", "method", "T", "final_metric", "used", "discarded",
    "tau_avg", "tau_med", "tau_max", "bound_value",
]

SEED_ENV_VAR = "ASYNC_OPT_SEED"

INNER_FACTORIES = {
    "sgd_nonconvex": sgd_nonconvex,
    "sgd_convex_smooth": sgd_convex_smooth,
    "psgd_convex_lipschitz": psgd_convex_lipschitz,
    "acsa": acsa_accelerated,
}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    validate_config(config)
    return config


def resolve_seeds(config: dict) -> list[int]:
    """Config seeds, with the base optionally overridden by ASYNC_OPT_SEED."""
    spec = config["seeds"]
    if isinstance(spec, dict):
        base, count = int(spec.get("base", 0)), int(spec["count"])
        seeds = [base + i for i in range(count)]
    else:
        seeds = [int(s) for s in spec]
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        base = int(env)
        seeds = [base + i for i in range(len(seeds))]
    return seeds


def validate_config(config: dict) -> None:
    if not isinstance(config, dict):
        raise ConfigurationError("config must be a JSON object")
    for key in ("name", "T", "seeds", "sigma", "problem", "w1", "delays", "methods"):
        if key not in config:
            raise ConfigurationError(f"config is missing required key {key!r}")
    if int(config["T"]) < 1:
        raise ConfigurationError("T must be >= 1")
    if not resolve_seeds(config):
        raise ConfigurationError("seeds must be nonempty")
    if float(config["sigma"]) < 0:
        raise ConfigurationError("sigma must be nonnegative")
    problem_from_config(config["problem"])
    _delay_builder(config["delays"], int(config["T"]))
    if not isinstance(config["methods"], list) or not config["methods"]:
        raise ConfigurationError("methods must be a nonempty list")
    for m in config["methods"]:
        method_label(m)


def _delay_builder(cfg: dict, T: int):
    """Validate the delay spec and return builder(seed) -> DelaySequence."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigurationError("delay config must be a mapping with a 'kind' key")
    kind = cfg["kind"]
    try:
        if kind == "constant":
            tau = int(cfg["tau"])
            constant_delay(T, tau)
            return lambda seed: constant_delay(T, tau)
        if kind == "staircase":
            tau_max = int(cfg["tau_max"])
            staircase_adversarial(T, tau_max)
            return lambda seed: staircase_adversarial(T, tau_max)
        if kind == "half_outlier":
            half_outlier(T)
            return lambda seed: half_outlier(T)
        if kind == "one_fast_machine":
            n, M = int(cfg["n"]), int(cfg["machines"])
            seq = one_fast_machine(n, M)
            if seq.T != T:
                raise ConfigurationError(
                    f"one_fast_machine(n={n}, M={M}) has T={seq.T}; config says T={T}"
                )
            return lambda seed: one_fast_machine(n, M)
        if kind == "workers":
            M, P = int(cfg["machines"]), float(cfg.get("rate", 4.06))
            fixed_seed = cfg.get("seed")

            def build(seed):
                schedule = WorkerSchedule(
                    machines=M, rate=P,
                    slow_factor=float(cfg.get("slow_factor", 150.0)),
                    fast_weight=float(cfg.get("fast_weight", 0.92)),
                    seed=int(fixed_seed) if fixed_seed is not None else seed,
                )
                return simulate_workers(T, schedule)

            build(0)
            return build
        if kind == "file":
            path = cfg["path"]
            seq = load_delays(path)
            if seq.T != T:
                raise ConfigurationError(f"{path} holds T={seq.T} delays; config says T={T}")
            return lambda seed: seq
    except KeyError as exc:
        raise ConfigurationError(f"delay config for {kind!r} is missing {exc}") from exc
    raise ConfigurationError(f"unknown delay kind {kind!r}")


def method_label(m: dict) -> str:
    if not isinstance(m, dict) or "kind" not in m:
        raise ConfigurationError("method config must be a mapping with a 'kind' key")
    if "label" in m:
        return str(m["label"])
    kind = m["kind"]
    if kind == "vanilla_async_sgd":
        return f"vanilla(eta={m.get('eta')})"
    if kind == "minibatch":
        parts = [m.get("inner", "?"), f"q={m.get('q')}", f"tau={m.get('tau_hat')}"]
        if m.get("B") is not None:
            parts.append(f"B={m['B']}")
        if m.get("strictness", "exact") != "exact":
            parts.append("relaxed")
        return "minibatch(" + ",".join(str(p) for p in parts) + ")"
    if kind == "adaptive_sweep":
        return f"sweep({m.get('setting', '?')})"
    raise ConfigurationError(f"unknown method kind {kind!r}")


def _resolve_constants(config: dict, problem, w1) -> dict:
    """F/D/G for the schedules: explicit overrides, else exact from the problem."""
    overrides = config.get("constants", {})
    consts = {}
    consts["F"] = overrides.get("F")
    if consts["F"] is None and problem.f_star is not None:
        consts["F"] = initial_gap(problem, w1)
    consts["D"] = overrides.get("D")
    if consts["D"] is None:
        if problem.diameter is not None:
            consts["D"] = problem.diameter
        elif problem.w_star is not None:
            consts["D"] = initial_distance(problem, w1)
    consts["G"] = overrides.get("G", problem.lipschitz)
    return consts


def _metric_fn(config: dict, problem):
    metric = config.get("metric", "auto")
    if metric == "auto":
        metric = "gap" if problem.is_convex else "grad_sq"
    if metric == "gap":
        return metric, problem.gap
    if metric == "grad_sq":
        return metric, problem.grad_sq
    raise ConfigurationError(f"unknown metric {metric!r}")


def run_cell(config: dict, method_index: int, seed: int) -> dict:
    """Run one (method, seed) cell; returns the metrics row plus extras."""
    T = int(config["T"])
    sigma = float(config["sigma"])
    problem = problem_from_config(config["problem"])
    w1 = np.asarray(config["w1"], dtype=float)
    if w1.ndim == 0:
        w1 = np.full(problem.dim, float(w1))
    method = config["methods"][method_index]
    label = method_label(method)
    metric_name, metric = _metric_fn(config, problem)
    consts = _resolve_constants(config, problem, w1)

    seeds = np.random.SeedSequence(seed).spawn(3)
    oracle = GradientOracle(problem, sigma, seed=seeds[0])
    delays = _delay_builder(config["delays"], T)(seeds[2])
    stats = compute_stats(delays)

    row = {
        "seed": seed, "method": label, "T": T,
        "final_metric": math.nan, "used": 0, "discarded": 0,
        "tau_avg": stats.tau_avg, "tau_med": stats.tau_med, "tau_max": stats.tau_max,
        "bound_value": None,
    }
    extras = {"label": label, "error": None, "log": None, "diagnostics": None}

    kind = method["kind"]
    try:
        if kind == "vanilla_async_sgd":
            algo = VanillaAsyncSgd(problem, w1, float(method["eta"]))
            output, log = engine.run(algo, oracle, delays)
        elif kind == "minibatch":
            inner_name = method["inner"]
            q, tau_hat = float(method["q"]), int(method["tau_hat"])
            schedule = derive_schedule(T, q, tau_hat, sigma)
            B = int(method["B"]) if method.get("B") is not None else schedule.B
            sigma_eff = sigma / math.sqrt(B)
            inner = _make_inner(inner_name, problem, w1, schedule.K, sigma_eff, consts,
                                seed=seeds[1])
            output, log, diag = run_minibatched(
                inner, oracle, delays, B=B,
                strictness=Strictness(method.get("strictness", "exact")),
            )
            extras["diagnostics"] = diag.to_json()
            row["bound_value"] = _minibatch_bound(inner_name, T, q, tau_hat, sigma,
                                                  problem.beta, consts)
        elif kind == "adaptive_sweep":
            schedule = make_schedule(method["setting"], problem, sigma,
                                     F=consts["F"], D=consts["D"], G=consts["G"])
            result, log = run_adaptive_sweep(schedule, problem, oracle, delays, w1,
                                             seed=seeds[1])
            output = OptimizerOutput(w_hat=result.w_hat)
            envelope = sweep_rate_envelope(
                method["setting"], delays, sigma=sigma, beta=problem.beta,
                F=consts["F"], D=consts["D"], G=consts["G"],
            )
            row["bound_value"] = envelope.value
            extras["diagnostics"] = {"completed_epochs": result.completed}
        else:
            raise ConfigurationError(f"unknown method kind {kind!r}")
    except ScheduleError as exc:
        extras["error"] = str(exc)
        return {"row": row, **extras}

    row["final_metric"] = float(metric(output.w_hat))
    row["used"] = log.used
    row["discarded"] = log.discarded
    if config.get("rounds_log"):
        extras["log"] = log
    return {"row": row, **extras}


def _make_inner(name: str, problem, w1, K: int, sigma_eff: float, consts: dict, seed):
    if name not in INNER_FACTORIES:
        raise ConfigurationError(f"unknown inner algorithm {name!r}")
    if name == "sgd_nonconvex":
        return sgd_nonconvex(problem, w1, K, sigma_eff, consts["F"], seed=seed)
    if name == "sgd_convex_smooth":
        return sgd_convex_smooth(problem, w1, K, sigma_eff, consts["D"], seed=seed)
    if name == "psgd_convex_lipschitz":
        return psgd_convex_lipschitz(problem, w1, K, sigma_eff, consts["D"], consts["G"],
                                     seed=seed)
    return acsa_accelerated(problem, w1, K, sigma_eff, consts["D"], seed=seed)


def _minibatch_bound(inner_name: str, T: int, q: float, tau_hat: int, sigma: float,
                     beta: Optional[float], consts: dict) -> Optional[float]:
    try:
        report = bounds.minibatched_rate(
            inner_name, T, q, tau_hat, sigma, beta=beta,
            F=consts.get("F"), D=consts.get("D"), G=consts.get("G"),
        )
    except (TypeError, ScheduleError):
        return None
    return report.value


def _cell_worker(args):
    config, method_index, seed = args
    return run_cell(config, method_index, seed)


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", label)


def run_experiment(config: dict, outdir, *, workers: int = 1,
                   render_figures: bool = True) -> dict:
    """Run the full matrix and write metrics.csv, summary.json, figures.

    Returns the summary dict; summary["errors"] counts cells that hit a
    schedule error (recorded, not fatal).
    """
    validate_config(config)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    seeds = resolve_seeds(config)
    cells = [(mi, seed) for mi in range(len(config["methods"])) for seed in seeds]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_worker, [(config, mi, s) for mi, s in cells]))
    else:
        results = [run_cell(config, mi, s) for mi, s in cells]

    with open(outdir / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for res in results:
            row = dict(res["row"])
            if row["bound_value"] is None:
                row["bound_value"] = ""
            writer.writerow(row)

    for (mi, seed), res in zip(cells, results):
        if res["log"] is not None:
            res["log"].to_csv(outdir / f"rounds_{_slug(res['label'])}_s{seed}.csv")

    summary = _summarize(config, cells, results)
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)

    if render_figures:
        figures.metric_figure(summary, outdir / "metrics.png")
        first_delays = _delay_builder(config["delays"], int(config["T"]))(
            np.random.SeedSequence(seeds[0]).spawn(3)[2]
        )
        figures.delay_figure(first_delays, outdir / "delays.png",
                             title=f"{config['name']}: delays (seed {seeds[0]})")
    return summary


def _summarize(config: dict, cells, results) -> dict:
    problem = problem_from_config(config["problem"])
    metric_name, _ = _metric_fn(config, problem)
    methods = []
    n_errors = 0
    for mi, method in enumerate(config["methods"]):
        rows = [res for (ci, _), res in zip(cells, results) if ci == mi]
        metrics = [r["row"]["final_metric"] for r in rows if r["error"] is None]
        errors = [r["error"] for r in rows if r["error"] is not None]
        n_errors += len(errors)
        finite = [m for m in metrics if not math.isnan(m)]
        bound_values = [r["row"]["bound_value"] for r in rows
                        if r["row"]["bound_value"] is not None]
        methods.append({
            "label": method_label(method),
            "kind": method["kind"],
            "n_seeds": len(rows),
            "mean": float(np.mean(finite)) if finite else None,
            "std": float(np.std(finite)) if finite else None,
            "bound_value": bound_values[0] if bound_values else None,
            "mean_used": float(np.mean([r["row"]["used"] for r in rows])),
            "mean_discarded": float(np.mean([r["row"]["discarded"] for r in rows])),
            "errors": errors,
            "diagnostics": rows[0]["diagnostics"] if rows else None,
        })
    return {
        "name": config["name"],
        "T": int(config["T"]),
        "sigma": float(config["sigma"]),
        "metric": metric_name,
        "seeds": resolve_seeds(config),
        "methods": methods,
        "errors": n_errors,
    }
