"""Closed-form rate guarantees and exact lower-bound constructions.

The rate functions evaluate the non-asymptotic guarantees of the base
optimizers with their exact constants, the scaling forms used for trend
checks (unit constants), and the wrapped rate obtained by feeding the derived
(sigma_eff, K) schedule back into a base rate.  The lower-bound constructions
return the adversarial delay sequence, the matching objective, the predicted
trajectory, and the predicted averaged lower bounds, all verifiable by
deterministic simulation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import engine
from .delays import DelaySequence, MACHINE_SIMULATED, staircase_adversarial
from .errors import ParameterError
from .minibatch import derive_schedule
from .optimizers import VanillaAsyncSgd
from .problems import GradientOracle, Problem, make_quadratic

Array = np.ndarray


@dataclass
class BoundReport:
    """An evaluated rate expression together with the exact inputs used."""

    setting: str
    formula: str
    inputs: dict
    value: float

    def to_json(self) -> dict:
        return {"setting": self.setting, "formula": self.formula,
                "inputs": self.inputs, "value": self.value}

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def rate_rsgd_nonconvex(beta: float, F: float, sigma: float, K: int) -> float:
    """2 beta F / K + sqrt(8 sigma^2 beta F / K)."""
    return 2.0 * beta * F / K + math.sqrt(8.0 * sigma**2 * beta * F / K)


def rate_sgd_convex_smooth(beta: float, D: float, sigma: float, K: int) -> float:
    """beta D^2 / K + 2 sigma D / sqrt(K)."""
    return beta * D * D / K + 2.0 * sigma * D / math.sqrt(K)


def rate_psgd_lipschitz(D: float, G: float, sigma: float, K: int) -> float:
    """2 D sqrt(G^2 + sigma^2) / sqrt(K)."""
    return 2.0 * D * math.sqrt(G * G + sigma * sigma) / math.sqrt(K)


def rate_acsa(beta: float, D: float, sigma: float, K: int) -> float:
    """4 beta D^2 / (K (K+1)) + 4 sigma D / sqrt(3 K)."""
    return 4.0 * beta * D * D / (K * (K + 1.0)) + 4.0 * sigma * D / math.sqrt(3.0 * K)


BASE_RATES = {
    "sgd_nonconvex": rate_rsgd_nonconvex,
    "sgd_convex_smooth": rate_sgd_convex_smooth,
    "psgd_convex_lipschitz": rate_psgd_lipschitz,
    "acsa": rate_acsa,
}


def scaling_rate(setting: str, T: int, q: float, tau_hat_q: int, *,
                 beta: Optional[float] = None, F: Optional[float] = None,
                 D: Optional[float] = None, G: Optional[float] = None,
                 sigma: float = 0.0) -> BoundReport:
    """Unit-constant scaling expressions for trend checks, not acceptance.

    sgd_nonconvex:         (1+tau) beta F / qT + sigma sqrt(beta F) / sqrt(qT)
    sgd_convex_smooth:     (1+tau) beta D^2 / qT + D sigma / sqrt(qT)
    acsa:                  (1+tau)^2 beta D^2 / (qT)^2 + D sigma / sqrt(qT)
    psgd_convex_lipschitz: D (sqrt(1+tau) G + sigma) / sqrt(qT)
    """
    if not 0.0 < q <= 1.0:
        raise ParameterError("q must lie in (0, 1]")
    if tau_hat_q < 0:
        raise ParameterError("tau_hat_q must be nonnegative")
    qT = q * T
    tau1 = 1.0 + tau_hat_q
    if setting == "sgd_nonconvex":
        value = tau1 * beta * F / qT + sigma * math.sqrt(beta * F) / math.sqrt(qT)
        formula = "(1+tau) beta F / qT + sigma sqrt(beta F) / sqrt(qT)"
    elif setting == "sgd_convex_smooth":
        value = tau1 * beta * D * D / qT + D * sigma / math.sqrt(qT)
        formula = "(1+tau) beta D^2 / qT + D sigma / sqrt(qT)"
    elif setting == "acsa":
        value = tau1**2 * beta * D * D / qT**2 + D * sigma / math.sqrt(qT)
        formula = "(1+tau)^2 beta D^2 / (qT)^2 + D sigma / sqrt(qT)"
    elif setting == "psgd_convex_lipschitz":
        value = D * (math.sqrt(tau1) * G + sigma) / math.sqrt(qT)
        formula = "D (sqrt(1+tau) G + sigma) / sqrt(qT)"
    else:
        raise ParameterError(f"unknown setting {setting!r}")
    return BoundReport(
        setting=setting, formula=formula,
        inputs={"T": T, "q": q, "tau_hat_q": tau_hat_q, "beta": beta, "F": F,
                "D": D, "G": G, "sigma": sigma},
        value=float(value),
    )


def minibatched_rate(setting: str, T: int, q: float, tau_hat_q: int, sigma: float, *,
                     beta: Optional[float] = None, F: Optional[float] = None,
                     D: Optional[float] = None, G: Optional[float] = None) -> BoundReport:
    """Exact guarantee of the mini-batched wrapper: the base rate at
    (sigma / sqrt(B), floor(qT / (1 + 2 tau_hat)))."""
    sched = derive_schedule(T, q, tau_hat_q, sigma)
    if setting == "sgd_nonconvex":
        value = rate_rsgd_nonconvex(beta, F, sched.sigma_eff, sched.K)
    elif setting == "sgd_convex_smooth":
        value = rate_sgd_convex_smooth(beta, D, sched.sigma_eff, sched.K)
    elif setting == "psgd_convex_lipschitz":
        value = rate_psgd_lipschitz(D, G, sched.sigma_eff, sched.K)
    elif setting == "acsa":
        value = rate_acsa(beta, D, sched.sigma_eff, sched.K)
    else:
        raise ParameterError(f"unknown setting {setting!r}")
    return BoundReport(
        setting=setting,
        formula=f"base rate at (sigma/sqrt({sched.B}), {sched.K})",
        inputs={"T": T, "q": q, "tau_hat_q": tau_hat_q, "sigma": sigma,
                "B": sched.B, "K": sched.K, "sigma_eff": sched.sigma_eff,
                "beta": beta, "F": F, "D": D, "G": G},
        value=float(value),
    )


@dataclass
class StaircaseLowerBound:
    """Adversarial construction forcing maximal-delay degradation.

    The first tau_max+1 rounds all deliver gradients of w1, so fixed-stepsize
    asynchronous SGD walks in a straight line: w_t = w1 (1 - eta beta (t-1))
    for t <= tau_max+2.  The predicted averaged lower bounds use the full
    constant for even tau_max and half of it for odd tau_max.
    """

    delays: DelaySequence
    problem: Problem
    eta: float
    beta: float
    w1: float
    F: float
    tau_max: int
    T: int
    trajectory: Array = field(repr=False)  # predicted w_t, t = 1..tau_max+2
    grad_sq_avg_bound: float = 0.0
    subopt_avg_bound: float = 0.0


def staircase_lower_bound(T: int, tau_max: int, beta: float, w1: float,
                          eta: float) -> StaircaseLowerBound:
    if beta <= 0:
        raise ParameterError("beta must be positive")
    if not 1 <= tau_max <= T - 2:
        raise ParameterError("need 1 <= tau_max <= T-2")
    threshold = 6.0 / (beta * (1.0 + tau_max))
    if eta <= threshold:
        raise ParameterError(
            f"eta = {eta} is at or below 6/(beta (1+tau_max)) = {threshold}; "
            "use the small-stepsize construction instead"
        )
    problem = make_quadratic(1, beta)
    F = 0.5 * beta * w1 * w1
    t = np.arange(1, tau_max + 3, dtype=float)
    trajectory = w1 * (1.0 - eta * beta * (t - 1.0))
    parity_factor = 1.0 if tau_max % 2 == 0 else 0.5
    return StaircaseLowerBound(
        delays=staircase_adversarial(T, tau_max),
        problem=problem,
        eta=float(eta),
        beta=float(beta),
        w1=float(w1),
        F=F,
        tau_max=tau_max,
        T=T,
        trajectory=trajectory,
        grad_sq_avg_bound=parity_factor * 4.0 * (1.0 + tau_max) * beta * F / T,
        subopt_avg_bound=parity_factor * (1.0 + tau_max) * beta * w1 * w1 / T,
    )


@dataclass
class SmallStepLowerBound:
    """Stepsize-limited construction valid under any delay sequence.

    f(w) = (eps/2)(w - w*)^2 with eps = min{beta, 1/(2 eta T)} and w* = -1
    for w1 >= 0 (+1 otherwise) keeps every iterate sandwiched between the
    midpoint and the start: (w1-w*)/2 <= w_t - w* <= w1 - w*.
    """

    problem: Problem
    epsilon: float
    w_star: float
    eta: float
    beta: float
    w1: float
    T: int
    F: float
    grad_sq_avg_bound: float = 0.0
    subopt_avg_bound: float = 0.0


def small_stepsize_lower_bound(T: int, beta: float, eta: float, w1: float) -> SmallStepLowerBound:
    if beta <= 0 or eta <= 0 or T < 1:
        raise ParameterError("need beta > 0, eta > 0 and T >= 1")
    epsilon = min(beta, 1.0 / (2.0 * eta * T))
    w_star = -1.0 if w1 >= 0 else 1.0
    problem = make_quadratic(1, epsilon, w_star=np.array([w_star]))
    F = 0.5 * epsilon * (w1 - w_star) ** 2
    denom = 2.0 * max(1.0, 2.0 * beta * eta * T)
    return SmallStepLowerBound(
        problem=problem,
        epsilon=epsilon,
        w_star=w_star,
        eta=float(eta),
        beta=float(beta),
        w1=float(w1),
        T=T,
        F=F,
        grad_sq_avg_bound=beta * F / denom,
        subopt_avg_bound=beta * (w1 - w_star) ** 2 / (8.0 * max(1.0, 2.0 * beta * eta * T)),
    )


@dataclass
class SimulatedAverages:
    grad_sq_avg: float
    subopt_avg: float
    iterates: Array  # played points w_1..w_T


def simulate_fixed_stepsize(problem: Problem, delays: DelaySequence, w1: float,
                            eta: float) -> SimulatedAverages:
    """Run vanilla asynchronous SGD with exact gradients and average the
    squared gradient norm and the suboptimality over the played iterates."""
    algo = VanillaAsyncSgd(problem, np.atleast_1d(np.array(w1, dtype=float)), eta)
    oracle = GradientOracle(problem, sigma=0.0)
    engine.run(algo, oracle, delays)
    played = np.array(algo.iterates[: delays.T])
    grads = np.array([problem.grad_sq(w) for w in played])
    gaps = np.array([problem.gap(w) for w in played])
    return SimulatedAverages(
        grad_sq_avg=float(grads.mean()),
        subopt_avg=float(gaps.mean()),
        iterates=played,
    )


def sandwich_holds(construction: SmallStepLowerBound, iterates: Array) -> bool:
    """Check (w1-w*)/2 <= w_t - w* <= w1 - w* at every played iterate."""
    gap0 = construction.w1 - construction.w_star
    rel = (np.asarray(iterates, dtype=float).reshape(-1) - construction.w_star) / gap0
    return bool(np.all(rel >= 0.5 - 1e-12) and np.all(rel <= 1.0 + 1e-12))


@dataclass
class MachineBoundReport:
    applicable: bool
    machines: Optional[int]
    average: float
    bound: Optional[float]

    @property
    def passed(self) -> bool:
        return (not self.applicable) or self.average <= self.bound + 1e-12


def machine_average_report(seq: DelaySequence) -> MachineBoundReport:
    """Average delay of an M-worker run never exceeds M - 1."""
    avg = float(np.asarray(seq.delays).mean())
    if seq.origin != MACHINE_SIMULATED:
        return MachineBoundReport(applicable=False, machines=None, average=avg, bound=None)
    return MachineBoundReport(
        applicable=True,
        machines=seq.machines,
        average=avg,
        bound=float(seq.machines - 1),
    )
