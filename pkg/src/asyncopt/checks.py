"""Claim-verification battery behind ``asyncopt verify``.

Each check exercises one of the library's guarantees end to end at its
stated tolerance: counting floors for dispatched batches, the sweep's epoch
budget inequality, the exact lower-bound constructions, the worker-count
bound on average delay, quantile relations, the base-optimizer rates with
their exact constants, the wrapped and adaptive end-to-end rates, relaxed
filtering staleness, mini-batch variance reduction, and a deliberate filter
mutation that must be caught.  The acceptance test suite runs the same
functions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import engine
from .bounds import (
    machine_average_report,
    rate_acsa,
    rate_psgd_lipschitz,
    rate_rsgd_nonconvex,
    rate_sgd_convex_smooth,
    simulate_fixed_stepsize,
    small_stepsize_lower_bound,
    staircase_lower_bound,
    sandwich_holds,
)
from .delays import (
    DelaySequence,
    WorkerSchedule,
    compute_stats,
    constant_delay,
    half_outlier,
    quantile_support,
    simulate_workers,
)
from .minibatch import (
    MiniBatchRunner,
    Strictness,
    check_dispatch_count,
    count_dispatches,
    derive_schedule,
    dispatch_floor,
    run_minibatched,
)
from .optimizers import (
    FixedQueryAlgorithm,
    acsa_accelerated,
    psgd_convex_lipschitz,
    run_synchronous,
    sgd_convex_smooth,
    sgd_nonconvex,
)
from .problems import (
    GradientOracle,
    initial_gap,
    make_convex_lipschitz,
    make_nonconvex_smooth,
    make_quadratic,
)
from .sweep import Setting, SweepSchedule, check_sweep_budget, run_adaptive_sweep, sweep_rate_envelope


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def random_delay_sequence(rng: np.random.Generator, T: Optional[int] = None,
                          T_max: int = 512) -> DelaySequence:
    """A feasible random sequence drawn from one of four qualitative families."""
    if T is None:
        T = int(rng.integers(2, T_max + 1))
    i = np.arange(T, dtype=np.int64)  # feasible maximum per round
    family = int(rng.integers(4))
    if family == 0:
        d = rng.integers(0, i + 1)
    elif family == 1:
        p = rng.uniform(0.05, 0.3)
        d = np.where(rng.random(T) < p, i, 0)
    elif family == 2:
        tau = int(rng.integers(0, T // 2 + 1))
        jitter = rng.integers(0, 3, size=T)
        d = np.minimum(np.maximum(tau - jitter, 0), i)
    else:
        cut = int(rng.integers(1, T + 1))
        d = np.where(i + 1 > cut, i, 0)
    return DelaySequence(np.asarray(d, dtype=np.int64))


def check_dispatch_floor(seed: int = 0) -> CheckResult:
    """Dispatched batches >= sup_q floor(qT / (B + tau_q)) on 500 random runs."""
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(500):
        seq = random_delay_sequence(rng, T_max=512)
        B = int(rng.integers(1, 17))
        report = check_dispatch_count(count_dispatches(seq, B), seq, B)
        if not report.passed:
            failures.append((i, seq.T, B, report.dispatched, report.floor))
    detail = f"{500 - len(failures)}/500 random runs (T<=512, B<=16) meet the dispatch floor"
    if failures:
        detail += f"; first failure: {failures[0]}"
    return CheckResult("dispatch_floor", not failures, detail)


def _sweep_problem(setting: Setting, rng: np.random.Generator):
    beta = float(rng.uniform(0.5, 2.0))
    sigma = float(rng.choice([0.0, 0.5, 1.5]))
    if setting is Setting.PSGD_CONVEX_LIPSCHITZ:
        G = float(rng.uniform(0.5, 2.0))
        D = float(rng.uniform(0.5, 2.0))
        problem = make_convex_lipschitz(1, G, D)
        w1 = np.array([D / 2.0])
        schedule = SweepSchedule(setting=setting, sigma=sigma, D=D, G=G)
        return problem, w1, schedule
    problem = make_quadratic(1, beta)
    if setting is Setting.NONCONVEX_SGD:
        F = float(rng.uniform(0.3, 2.0))
        w1 = np.array([math.sqrt(2.0 * F / beta)])  # makes f(w1) - f* = F exactly
        schedule = SweepSchedule(setting=setting, sigma=sigma, beta=beta, F=F)
    else:
        D = float(rng.uniform(0.5, 2.0))
        w1 = np.array([D])
        schedule = SweepSchedule(setting=setting, sigma=sigma, beta=beta, D=D)
    return problem, w1, schedule


def check_sweep_budget_battery(seed: int = 0) -> CheckResult:
    """qT < 2 (B_{I+1} + tau_q) K_{I+1} at every quantile of 200 random runs
    under all four setting schedules."""
    rng = np.random.default_rng(seed)
    failures = 0
    vacuous = 0
    runs = 0
    for i in range(200):
        seq = random_delay_sequence(rng, T_max=512)
        for setting in Setting:
            problem, w1, schedule = _sweep_problem(setting, rng)
            oracle = GradientOracle(problem, schedule.sigma, seed=rng.integers(2**32))
            result, _ = run_adaptive_sweep(schedule, problem, oracle, seq, w1,
                                           seed=int(rng.integers(2**32)))
            runs += 1
            if result.completed == 0:
                vacuous += 1
                continue
            if not check_sweep_budget(result, seq, schedule).passed:
                failures += 1
    detail = (f"{runs - failures}/{runs} sweep runs satisfy the epoch budget inequality "
              f"({vacuous} with no completed epoch are vacuous)")
    return CheckResult("sweep_budget", failures == 0 and vacuous < runs // 2, detail)


def check_staircase_bound(seed: int = 0) -> CheckResult:
    """Exact trajectory match and averaged lower bounds on the staircase run."""
    T, tau_max, beta, w1 = 1000, 100, 1.0, 1.0
    eta = 6.1 / (beta * (1 + tau_max))
    lb = staircase_lower_bound(T, tau_max, beta, w1, eta)
    sim = simulate_fixed_stepsize(lb.problem, lb.delays, w1, eta)
    head = sim.iterates[: tau_max + 2].reshape(-1)
    rel_err = float(np.max(np.abs(head - lb.trajectory) / np.maximum(np.abs(lb.trajectory), 1e-300)))
    traj_ok = rel_err <= 1e-12
    grad_ok = sim.grad_sq_avg >= lb.grad_sq_avg_bound
    subopt_ok = sim.subopt_avg >= lb.subopt_avg_bound
    detail = (f"trajectory max rel err {rel_err:.2e} (<=1e-12: {traj_ok}); "
              f"avg |grad|^2 {sim.grad_sq_avg:.4f} >= {lb.grad_sq_avg_bound:.4f}: {grad_ok}; "
              f"avg gap {sim.subopt_avg:.4f} >= {lb.subopt_avg_bound:.4f}: {subopt_ok}")
    return CheckResult("staircase_lower_bound", traj_ok and grad_ok and subopt_ok, detail)


def check_small_step_bound(seed: int = 0) -> CheckResult:
    """Sandwich invariant plus both averaged lower bounds for tiny stepsizes."""
    T, beta, w1 = 1000, 1.0, 1.0
    zero = DelaySequence(np.zeros(T, dtype=np.int64))
    problems = []
    for eta in (1e-4, 1e-2):
        lb = small_stepsize_lower_bound(T, beta, eta, w1)
        sim = simulate_fixed_stepsize(lb.problem, zero, w1, eta)
        ok = (sandwich_holds(lb, sim.iterates)
              and sim.grad_sq_avg >= lb.grad_sq_avg_bound
              and sim.subopt_avg >= lb.subopt_avg_bound)
        problems.append((eta, ok, sim.grad_sq_avg, lb.grad_sq_avg_bound))
    passed = all(ok for _, ok, _, _ in problems)
    detail = "; ".join(
        f"eta={eta:g}: sandwich+bounds {'ok' if ok else 'FAIL'} "
        f"(avg |grad|^2 {got:.3e} >= {want:.3e})"
        for eta, ok, got, want in problems
    )
    return CheckResult("small_step_lower_bound", passed, detail)


def check_machine_average(seed: int = 0) -> CheckResult:
    """Average delay of simulated M-worker runs never exceeds M - 1 (100 runs)."""
    rng = np.random.default_rng(seed)
    failures = 0
    for i in range(100):
        M = int(rng.integers(2, 17))
        schedule = WorkerSchedule(machines=M, rate=4.06, seed=int(rng.integers(2**32)))
        seq = simulate_workers(256, schedule)
        if not machine_average_report(seq).passed:
            failures += 1
    return CheckResult(
        "machine_average", failures == 0,
        f"{100 - failures}/100 simulated runs (M in 2..16, rate 4.06) have avg delay <= M-1",
    )


def check_quantile_relations(seed: int = 0) -> CheckResult:
    """tau_med <= 2 tau_avg whenever tau_avg > 0, and tau_q nondecreasing in q,
    over 500 random sequences."""
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.05, 1.0, 20)
    failures = 0
    for i in range(500):
        seq = random_delay_sequence(rng, T_max=512)
        stats = compute_stats(seq)
        if stats.tau_avg > 0 and stats.tau_med > 2.0 * stats.tau_avg:
            failures += 1
            continue
        qs = sorted(set(grid.tolist()) | {c / seq.T for c, _ in quantile_support(seq)})
        taus = [stats.quantile(q) for q in qs]
        if any(b < a for a, b in zip(taus, taus[1:])):
            failures += 1
    return CheckResult(
        "quantile_relations", failures == 0,
        f"{500 - failures}/500 sequences satisfy the median bound and monotonicity",
    )


def _base_rate_case(name: str, seed: int, K: int, trials: int = 400):
    """One (setting, K) cell of the base-rate battery: returns (mean, bound)."""
    sigma = 1.0
    if name == "sgd_nonconvex":
        problem = make_nonconvex_smooth(4, 1.0)
        w1 = np.full(4, 1.5)
        F = initial_gap(problem, w1)
        make = lambda s: sgd_nonconvex(problem, w1, K, sigma, F, seed=s)
        metric = problem.grad_sq
        bound = rate_rsgd_nonconvex(problem.beta, F, sigma, K)
    elif name == "sgd_convex_smooth":
        problem = make_quadratic(1, 1.0)
        w1 = np.array([1.0])
        make = lambda s: sgd_convex_smooth(problem, w1, K, sigma, 1.0, seed=s)
        metric = problem.gap
        bound = rate_sgd_convex_smooth(problem.beta, 1.0, sigma, K)
    elif name == "psgd_convex_lipschitz":
        problem = make_convex_lipschitz(2, 1.0, 1.0)
        w1 = np.array([0.5, 0.0])
        make = lambda s: psgd_convex_lipschitz(problem, w1, K, sigma, 1.0, 1.0, seed=s)
        metric = problem.gap
        bound = rate_psgd_lipschitz(1.0, 1.0, sigma, K)
    else:
        problem = make_quadratic(1, 1.0)
        w1 = np.array([1.0])
        make = lambda s: acsa_accelerated(problem, w1, K, sigma, 1.0, seed=s)
        metric = problem.gap
        bound = rate_acsa(problem.beta, 1.0, sigma, K)

    case_index = ["sgd_nonconvex", "sgd_convex_smooth", "psgd_convex_lipschitz", "acsa"].index(name)
    total = 0.0
    for trial in range(trials):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(case_index, K, trial))
        oracle_seed, algo_seed = ss.spawn(2)
        oracle = GradientOracle(problem, sigma, seed=oracle_seed)
        output = run_synchronous(make(algo_seed), oracle)
        total += metric(output.w_hat)
    return total / trials, bound


def check_base_rates(seed: int = 0) -> CheckResult:
    """Mean metric over 400 seeded trials <= exact-constant rate x 1.05 for all
    four base optimizers at sigma=1 and K in {16, 64, 256}."""
    lines = []
    passed = True
    for name in ("sgd_nonconvex", "sgd_convex_smooth", "psgd_convex_lipschitz", "acsa"):
        for K in (16, 64, 256):
            mean, bound = _base_rate_case(name, seed, K)
            ok = mean <= 1.05 * bound
            passed = passed and ok
            lines.append(f"{name}@K={K}: {mean:.4f} <= 1.05*{bound:.4f} {'ok' if ok else 'FAIL'}")
    return CheckResult("base_rates", passed, "; ".join(lines))


def _minibatch_acsa_run(seed_entropy, strictness: Strictness):
    """Criterion-8 configuration: noisy quadratic, constant delay 8, T=4096."""
    T, tau, sigma = 4096, 8, 1.0
    problem = make_quadratic(1, 1.0)
    w1 = np.array([1.0])
    delays = constant_delay(T, tau)
    schedule = derive_schedule(T, 1.0, tau, sigma)
    oracle_seed, algo_seed = np.random.SeedSequence(seed_entropy).spawn(2)
    oracle = GradientOracle(problem, sigma, seed=oracle_seed)
    inner = acsa_accelerated(problem, w1, schedule.K, schedule.sigma_eff, 1.0, seed=algo_seed)
    output, log, diag = run_minibatched(inner, oracle, delays, B=schedule.B,
                                        strictness=strictness)
    return problem, schedule, output, log, diag


def check_minibatch_rate(seed: int = 0) -> CheckResult:
    """Wrapped accelerated SGD under constant delay 8 stays within the derived
    (sigma/sqrt(8), floor(T/17)) rate x 1.05 on average over 200 seeds."""
    trials = 200
    total = 0.0
    incomplete = 0
    for trial in range(trials):
        problem, schedule, output, _, diag = _minibatch_acsa_run(
            (seed, 8, trial), Strictness.EXACT)
        if not diag.complete:
            incomplete += 1
        total += problem.gap(output.w_hat)
    mean = total / trials
    bound = rate_acsa(1.0, 1.0, schedule.sigma_eff, schedule.K)
    ok = mean <= 1.05 * bound and incomplete == 0
    detail = (f"mean gap {mean:.5f} <= 1.05 * {bound:.5f} over {trials} seeds "
              f"(B={schedule.B}, K={schedule.K}, {incomplete} incomplete)")
    return CheckResult("minibatch_rate", ok, detail)


def check_relaxed_staleness(seed: int = 0) -> CheckResult:
    """In relaxed mode every accepted gradient's source query index is >= k-2
    on all runs of the wrapped-rate configuration."""
    trials = 200
    violations = 0
    for trial in range(trials):
        _, _, _, log, _ = _minibatch_acsa_run((seed, 8, trial), Strictness.RELAXED_K_MINUS_2)
        acc = log.accepted
        if np.any(log.source_id[acc] < log.played_id[acc] - 2):
            violations += 1
    return CheckResult(
        "relaxed_staleness", violations == 0,
        f"{trials - violations}/{trials} relaxed runs keep accepted sources within 2 queries",
    )


def check_sweep_adaptivity(seed: int = 0) -> CheckResult:
    """On the half-outlier sequence the sweep's mean metric beats the adaptive
    envelope at its best quantile, which itself halves the max-delay envelope."""
    T, sigma, beta = 4096, 1.0, 1.0
    problem = make_quadratic(1, beta)
    w1 = np.array([1.0])
    F = initial_gap(problem, w1)
    delays = half_outlier(T)
    schedule = SweepSchedule(setting=Setting.NONCONVEX_SGD, sigma=sigma, beta=beta, F=F)
    envelope = sweep_rate_envelope(Setting.NONCONVEX_SGD, delays, sigma=sigma, beta=beta, F=F)
    worst = next(p for p in envelope.points if p.q == 1.0)

    trials = 200
    total = 0.0
    for trial in range(trials):
        oracle_seed, algo_seed = np.random.SeedSequence((seed, 9, trial)).spawn(2)
        oracle = GradientOracle(problem, sigma, seed=oracle_seed)
        result, _ = run_adaptive_sweep(schedule, problem, oracle, delays, w1,
                                       seed=algo_seed)
        total += problem.grad_sq(result.w_hat)
    mean = total / trials
    ok_mean = mean <= envelope.value
    ok_gap = envelope.value < 0.5 * worst.value
    detail = (f"mean |grad|^2 {mean:.4f} <= envelope {envelope.value:.4f} at q={envelope.best.q:.4f}: "
              f"{ok_mean}; envelope < 0.5 x q=1 envelope {worst.value:.3f}: {ok_gap}")
    return CheckResult("sweep_adaptivity", ok_mean and ok_gap, detail)


def check_variance_reduction(seed: int = 0) -> CheckResult:
    """Dispatched batch means have empirical variance in [0.9, 1.1] x sigma^2/B
    for B in {1, 4, 16} over 10^4 dispatches each."""
    sigma = 1.0
    problem = make_quadratic(4, 1.0)
    w = np.full(4, 0.7)
    grad = problem.grad(w)
    n_batches = 10_000
    lines = []
    passed = True
    for i, B in enumerate((1, 4, 16)):
        inner = FixedQueryAlgorithm(w, K=n_batches)
        runner = MiniBatchRunner(inner, B=B)
        delays = DelaySequence(np.zeros(n_batches * B, dtype=np.int64))
        oracle = GradientOracle(problem, sigma, seed=(seed, 11, i))
        engine.run(runner, oracle, delays)
        means = np.array(inner.received)
        var_est = float(np.mean(np.sum((means - grad) ** 2, axis=1)))
        target = sigma**2 / B
        ok = 0.9 * target <= var_est <= 1.1 * target
        passed = passed and ok
        lines.append(f"B={B}: {var_est:.4f} vs sigma^2/B={target:.4f} {'ok' if ok else 'FAIL'}")
    return CheckResult("variance_reduction", passed, "; ".join(lines))


def check_filter_mutation(seed: int = 0) -> CheckResult:
    """A corrupted acceptance condition (source threshold shifted by +2) must
    fail the dispatch floor on at least one seeded case, while the real filter
    passes everywhere."""
    rng = np.random.default_rng(seed)
    cases = [(constant_delay(64, 3), 1)]
    for _ in range(5):
        seq = random_delay_sequence(rng, T_max=128)
        cases.append((seq, int(rng.integers(1, 5))))
    clean_ok = True
    mutant_caught = False
    for seq, B in cases:
        floor = dispatch_floor(seq, B)
        clean_ok = clean_ok and count_dispatches(seq, B) >= floor
        if count_dispatches(seq, B, _source_round_offset=2) < floor:
            mutant_caught = True
    detail = (f"real filter meets the floor on {len(cases)}/{len(cases)} cases: {clean_ok}; "
              f"corrupted filter caught: {mutant_caught}")
    return CheckResult("filter_mutation", clean_ok and mutant_caught, detail)


CHECKS: dict[str, Callable[[int], CheckResult]] = {
    "dispatch_floor": check_dispatch_floor,
    "sweep_budget": check_sweep_budget_battery,
    "staircase_lower_bound": check_staircase_bound,
    "small_step_lower_bound": check_small_step_bound,
    "machine_average": check_machine_average,
    "quantile_relations": check_quantile_relations,
    "base_rates": check_base_rates,
    "minibatch_rate": check_minibatch_rate,
    "sweep_adaptivity": check_sweep_adaptivity,
    "relaxed_staleness": check_relaxed_staleness,
    "variance_reduction": check_variance_reduction,
    "filter_mutation": check_filter_mutation,
}


def run_checks(names: Optional[list[str]] = None, seed: int = 0,
               echo: Callable[[str], None] = print) -> list[CheckResult]:
    selected = list(CHECKS) if not names else names
    unknown = [n for n in selected if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {unknown}; available: {list(CHECKS)}")
    results = []
    for name in selected:
        start = time.perf_counter()
        result = CHECKS[name](seed)
        result.seconds = time.perf_counter() - start
        results.append(result)
        status = "PASS" if result.passed else "FAIL"
        echo(f"{status}  {name:<24s} ({result.seconds:6.2f}s)  {result.detail}")
    return results
