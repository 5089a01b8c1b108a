"""Classical stochastic first-order methods as strict query/response state
machines, plus the streaming asynchronous-SGD baseline.

A K-query algorithm alternates query() -> respond(g) exactly K times and then
finalize()s its output point; violations raise ProtocolError.  The factory
functions bake in the tuned constant-stepsize schedules; sigma_in = 0 selects
the deterministic branch of each min{., .}.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ParameterError, ProtocolError
from .problems import Problem

Array = np.ndarray

RANDOM_ITERATE = "random_iterate"
AVERAGE_ITERATE = "average"


@dataclass
class OptimizerOutput:
    w_hat: Array
    trace: Optional[list[Array]] = None


class QueryAlgorithm:
    """Base class enforcing strict query/response alternation over K queries."""

    def __init__(self, K: int):
        if K < 1:
            raise ParameterError("K must be >= 1")
        self.K = int(K)
        self._queries = 0
        self._responses = 0
        self._awaiting = False

    @property
    def responses(self) -> int:
        return self._responses

    @property
    def complete(self) -> bool:
        return self._responses >= self.K

    def query(self) -> Array:
        if self._awaiting:
            raise ProtocolError("previous query has not been answered yet")
        if self._queries >= self.K:
            raise ProtocolError("query budget exhausted")
        w = self._next_query()
        self._queries += 1
        self._awaiting = True
        return w

    def respond(self, g: Array) -> None:
        if not self._awaiting:
            raise ProtocolError("respond() without a pending query")
        self._consume(np.asarray(g, dtype=float))
        self._responses += 1
        self._awaiting = False

    def finalize(self) -> OptimizerOutput:
        if not self.complete:
            raise ProtocolError(f"finalize() after {self._responses}/{self.K} responses")
        return self._finalize()

    def _next_query(self) -> Array:
        raise NotImplementedError

    def _consume(self, g: Array) -> None:
        raise NotImplementedError

    def _finalize(self) -> OptimizerOutput:
        raise NotImplementedError


class Sgd(QueryAlgorithm):
    """Constant-stepsize (projected) SGD.

    Queries the iterates w_1..w_K, updating w <- w - gamma g after each
    response (with Euclidean projection when the problem has a bounded
    domain).  The output is either a uniformly random queried iterate, drawn
    with the algorithm's own seed, or the average of the queried iterates.
    """

    def __init__(self, problem: Problem, w1, K: int, gamma: float, seed: int = 0,
                 output: str = RANDOM_ITERATE):
        super().__init__(K)
        if gamma <= 0:
            raise ParameterError("stepsize must be positive")
        if output not in (RANDOM_ITERATE, AVERAGE_ITERATE):
            raise ParameterError(f"unknown output rule {output!r}")
        self.problem = problem
        self.gamma = float(gamma)
        self.output_rule = output
        self._rng = np.random.default_rng(seed)
        self._w = problem.project(np.array(w1, dtype=float))
        self._queried: list[Array] = []

    def _next_query(self) -> Array:
        self._queried.append(self._w)
        return self._w

    def _consume(self, g: Array) -> None:
        self._w = self.problem.project(self._w - self.gamma * g)

    def _finalize(self) -> OptimizerOutput:
        if self.output_rule == RANDOM_ITERATE:
            w_hat = self._queried[int(self._rng.integers(self.K))]
        else:
            w_hat = np.mean(self._queried, axis=0)
        return OptimizerOutput(w_hat=np.array(w_hat), trace=list(self._queried))


class AcSa(QueryAlgorithm):
    """Accelerated stochastic approximation (two-sequence momentum recursion).

    With weights alpha_t = 2/(t+1) and stepsizes gamma_t = gamma * t, step t
    queries the middle point md_t = (1-alpha_t) ag + alpha_t x, updates
    x <- x - gamma_t g, and aggregates ag <- (1-alpha_t) ag + alpha_t x.
    The output is the aggregate point after K steps.
    """

    def __init__(self, problem: Problem, w1, K: int, gamma: float, seed: int = 0):
        super().__init__(K)
        if gamma <= 0:
            raise ParameterError("stepsize must be positive")
        self.problem = problem
        self.gamma = float(gamma)
        w = problem.project(np.array(w1, dtype=float))
        self._x = w
        self._ag = np.array(w)
        self._alpha = 0.0
        self._queried: list[Array] = []

    def _next_query(self) -> Array:
        t = self._responses + 1
        self._alpha = 2.0 / (t + 1.0)
        md = (1.0 - self._alpha) * self._ag + self._alpha * self._x
        self._queried.append(md)
        return md

    def _consume(self, g: Array) -> None:
        t = self._responses + 1
        self._x = self.problem.project(self._x - self.gamma * t * g)
        self._ag = (1.0 - self._alpha) * self._ag + self._alpha * self._x

    def _finalize(self) -> OptimizerOutput:
        return OptimizerOutput(w_hat=np.array(self._ag), trace=list(self._queried))


class FixedQueryAlgorithm(QueryAlgorithm):
    """Emits the same point for every query and records the responses.

    Useful for exercising acceptance/dispatch patterns in isolation from any
    actual optimization (the pattern depends only on the delays).
    """

    def __init__(self, w, K: int = 2**62):
        super().__init__(K)
        self._w = np.array(w, dtype=float)
        self.received: list[Array] = []

    def _next_query(self) -> Array:
        return self._w

    def _consume(self, g: Array) -> None:
        self.received.append(g)

    def _finalize(self) -> OptimizerOutput:
        return OptimizerOutput(w_hat=np.array(self._w))


def _require(value, name: str):
    if value is None:
        raise ConfigurationError(f"this schedule requires the constant {name}")
    return float(value)


def sgd_nonconvex(problem: Problem, w1, K: int, sigma_in: float, F: float,
                  seed: int = 0) -> Sgd:
    """SGD tuned for beta-smooth minimization of the gradient norm.

    Stepsize min{1/beta, sqrt(2F / (sigma^2 beta K))}; the output is a
    uniformly random iterate, giving E||grad f(w_hat)||^2 <= 2 beta F / K
    + sqrt(8 sigma^2 beta F / K).
    """
    beta = _require(problem.beta, "beta")
    if F <= 0:
        raise ParameterError("F must be positive")
    if sigma_in < 0:
        raise ParameterError("sigma_in must be nonnegative")
    gamma = 1.0 / beta
    if sigma_in > 0:
        gamma = min(gamma, math.sqrt(2.0 * F / (sigma_in**2 * beta * K)))
    return Sgd(problem, w1, K, gamma, seed=seed, output=RANDOM_ITERATE)


def sgd_convex_smooth(problem: Problem, w1, K: int, sigma_in: float, D: float,
                      seed: int = 0) -> Sgd:
    """SGD tuned for convex smooth objectives with ||w1 - w*|| <= D.

    Stepsize min{1/beta, sqrt(D^2 / (sigma^2 K))}; random-iterate output,
    giving E[f(w_hat) - f*] <= beta D^2 / K + 2 sigma D / sqrt(K).
    """
    beta = _require(problem.beta, "beta")
    if D <= 0:
        raise ParameterError("D must be positive")
    if sigma_in < 0:
        raise ParameterError("sigma_in must be nonnegative")
    gamma = 1.0 / beta
    if sigma_in > 0:
        gamma = min(gamma, math.sqrt(D * D / (sigma_in**2 * K)))
    return Sgd(problem, w1, K, gamma, seed=seed, output=RANDOM_ITERATE)


def psgd_convex_lipschitz(problem: Problem, w1, K: int, sigma_in: float,
                          D: float, G: float, seed: int = 0) -> Sgd:
    """Projected subgradient descent on a bounded domain of diameter <= D.

    Stepsize D / sqrt((G^2 + sigma^2) K), average-iterate output, giving
    E[f(w_hat) - f*] <= 2 D sqrt(G^2 + sigma^2) / sqrt(K).
    """
    if problem.domain is None:
        raise ConfigurationError("projected SGD requires a bounded domain")
    if D <= 0 or G <= 0:
        raise ParameterError("D and G must be positive")
    if sigma_in < 0:
        raise ParameterError("sigma_in must be nonnegative")
    gamma = D / math.sqrt((G * G + sigma_in**2) * K)
    return Sgd(problem, w1, K, gamma, seed=seed, output=AVERAGE_ITERATE)


def acsa_accelerated(problem: Problem, w1, K: int, sigma_in: float, D: float,
                     seed: int = 0) -> AcSa:
    """Accelerated SGD tuned for convex smooth objectives.

    Base stepsize gamma = min{1/(4 beta), sqrt(3 D^2 / (4 sigma^2 K (K+1)^2))},
    giving E[f(w_hat) - f*] <= 4 beta D^2 / (K(K+1)) + 4 sigma D / sqrt(3K).
    """
    beta = _require(problem.beta, "beta")
    if D <= 0:
        raise ParameterError("D must be positive")
    if sigma_in < 0:
        raise ParameterError("sigma_in must be nonnegative")
    gamma = 1.0 / (4.0 * beta)
    if sigma_in > 0:
        gamma = min(gamma, math.sqrt(3.0 * D * D / (4.0 * sigma_in**2 * K * (K + 1.0) ** 2)))
    return AcSa(problem, w1, K, gamma, seed=seed)


class VanillaAsyncSgd:
    """Streaming baseline: applies every received gradient immediately.

    w_{t+1} = w_t - eta g_t with no filtering, however stale g_t may be.
    ``iterates`` holds w_1, w_2, ... (one entry per round played, plus the
    final point).
    """

    def __init__(self, problem: Problem, w1, eta: float):
        if eta <= 0:
            raise ParameterError("eta must be positive")
        self.problem = problem
        self.eta = float(eta)
        self._w = problem.project(np.array(w1, dtype=float))
        self.iterates: list[Array] = [self._w]

    def current_point(self) -> Array:
        return self._w

    def point_id(self) -> int:
        return len(self.iterates)

    def receive(self, g: Array, d: int) -> bool:
        self._w = self.problem.project(self._w - self.eta * np.asarray(g, dtype=float))
        self.iterates.append(self._w)
        return True

    def done(self) -> bool:
        return False

    def output(self) -> OptimizerOutput:
        return OptimizerOutput(w_hat=np.array(self._w), trace=list(self.iterates))


def run_synchronous(algorithm: QueryAlgorithm, oracle) -> OptimizerOutput:
    """Drive a query algorithm against an oracle with no delays."""
    while not algorithm.complete:
        w = algorithm.query()
        algorithm.respond(oracle.sample(w))
    return algorithm.finalize()


def trace_to_csv(output: OptimizerOutput, path) -> None:
    """Dump an iterate trace: columns k, norm, then one column per coordinate."""
    if output.trace is None:
        raise ParameterError("this output carries no trace")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = len(np.atleast_1d(output.trace[0]))
        writer.writerow(["k", "norm"] + [f"w{i}" for i in range(dim)])
        for k, w in enumerate(output.trace, start=1):
            w = np.atleast_1d(w)
            writer.writerow([k, float(np.linalg.norm(w))] + [float(x) for x in w])
