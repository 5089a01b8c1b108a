"""Benchmark objectives with analytic constants, and seeded noisy gradient oracles.

Every problem carries the constants the step-size schedules consume
(smoothness beta, Lipschitz constant G, domain diameter D, optimal value
f*, minimizer w*), certified by construction rather than estimated.
Oracles add isotropic Gaussian noise with second moment exactly sigma^2
and are deterministic given (seed, call order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DomainError, ParameterError

Array = np.ndarray


@dataclass(frozen=True)
class Ball:
    """Euclidean ball; the only bounded domain shipped."""

    center: Array
    radius: float

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, w: Array, tol: float = 1e-9) -> bool:
        return float(np.linalg.norm(w - self.center)) <= self.radius * (1.0 + tol) + tol

    def project(self, w: Array) -> Array:
        diff = w - self.center
        norm = float(np.linalg.norm(diff))
        if norm <= self.radius:
            return np.array(w, dtype=float)
        return self.center + diff * (self.radius / norm)


@dataclass
class Problem:
    """A differentiable (or subdifferentiable) objective plus its constants.

    ``gradient`` returns a subgradient for non-smooth objectives.  Constants
    that do not apply to a given problem are ``None``.
    """

    name: str
    dim: int
    objective: Callable[[Array], float]
    gradient: Callable[[Array], Array]
    domain: Optional[Ball] = None
    beta: Optional[float] = None
    lipschitz: Optional[float] = None
    diameter: Optional[float] = None
    f_star: Optional[float] = None
    w_star: Optional[Array] = None
    is_convex: bool = True

    def value(self, w: Array) -> float:
        return float(self.objective(np.asarray(w, dtype=float)))

    def grad(self, w: Array) -> Array:
        return self.gradient(np.asarray(w, dtype=float))

    def contains(self, w: Array) -> bool:
        return self.domain is None or self.domain.contains(w)

    def project(self, w: Array) -> Array:
        if self.domain is None:
            return np.asarray(w, dtype=float)
        return self.domain.project(np.asarray(w, dtype=float))

    def gap(self, w: Array) -> float:
        """Suboptimality f(w) - f*."""
        if self.f_star is None:
            raise ConfigurationError(f"problem {self.name!r} has no known optimal value")
        return self.value(w) - self.f_star

    def grad_sq(self, w: Array) -> float:
        g = self.grad(w)
        return float(np.dot(g, g))


def _as_point(x, dim: int) -> Array:
    w = np.asarray(x, dtype=float)
    if w.ndim == 0:
        w = np.full(dim, float(w))
    if w.shape != (dim,):
        raise ParameterError(f"expected a point of dimension {dim}, got shape {w.shape}")
    return w


def make_quadratic(dim: int, beta: float, w_star=None) -> Problem:
    """Quadratic bowl f(w) = (beta/2) ||w - w*||^2 with exact gradient beta (w - w*).

    f* = 0, and the gradient-norm identity ||grad f(w)||^2 = 2 beta (f(w) - f*)
    holds with equality.
    """
    if dim < 1:
        raise ParameterError("dimension must be >= 1")
    if beta <= 0:
        raise ParameterError("beta must be positive")
    ws = np.zeros(dim) if w_star is None else _as_point(w_star, dim)

    def objective(w: Array) -> float:
        diff = w - ws
        return 0.5 * beta * float(np.dot(diff, diff))

    def gradient(w: Array) -> Array:
        return beta * (w - ws)

    return Problem(
        name="quadratic",
        dim=dim,
        objective=objective,
        gradient=gradient,
        beta=float(beta),
        f_star=0.0,
        w_star=ws,
        is_convex=True,
    )


def make_nonconvex_smooth(dim: int, beta: float) -> Problem:
    """Separable saturating well f(w) = (beta/2) sum_i w_i^2 / (1 + w_i^2).

    Each term has second derivative in [-beta/4, beta] (maximum beta at 0),
    so the Hessian norm is at most beta everywhere: the smoothness constant
    is certified to be beta, and tight at the origin.  The objective is
    non-convex (concave for |w_i| > 1/sqrt(3)), bounded in [0, beta*dim/2),
    with global minimum f* = 0 at w* = 0.
    """
    if dim < 1:
        raise ParameterError("dimension must be >= 1")
    if beta <= 0:
        raise ParameterError("beta must be positive")

    def objective(w: Array) -> float:
        sq = w * w
        return 0.5 * beta * float(np.sum(sq / (1.0 + sq)))

    def gradient(w: Array) -> Array:
        return beta * w / (1.0 + w * w) ** 2

    return Problem(
        name="nonconvex_smooth",
        dim=dim,
        objective=objective,
        gradient=gradient,
        beta=float(beta),
        f_star=0.0,
        w_star=np.zeros(dim),
        is_convex=False,
    )


def make_convex_lipschitz(dim: int, G: float, D: float, center=None) -> Problem:
    """Cone f(w) = G ||w - w*|| on the ball of diameter D centered at w*.

    G-Lipschitz and convex; the subgradient at the kink w = w* is the zero
    vector (a valid, deterministic choice).
    """
    if dim < 1:
        raise ParameterError("dimension must be >= 1")
    if G <= 0:
        raise ParameterError("G must be positive")
    if D <= 0:
        raise ParameterError("D must be positive")
    c = np.zeros(dim) if center is None else _as_point(center, dim)

    def objective(w: Array) -> float:
        return G * float(np.linalg.norm(w - c))

    def gradient(w: Array) -> Array:
        diff = w - c
        norm = float(np.linalg.norm(diff))
        if norm == 0.0:
            return np.zeros(dim)
        return G * diff / norm

    return Problem(
        name="convex_lipschitz",
        dim=dim,
        objective=objective,
        gradient=gradient,
        domain=Ball(center=c, radius=D / 2.0),
        lipschitz=float(G),
        diameter=float(D),
        f_star=0.0,
        w_star=c,
        is_convex=True,
    )


def make_logistic(dim: int, n_samples: int = 200, seed: int = 0, reg: float = 1e-2) -> Problem:
    """Small synthetic ridge-regularized logistic regression.

    The smoothness constant lambda_max(X^T X) / (4n) + reg is an exact upper
    bound (the logistic curvature never exceeds 1/4).  The minimizer and
    optimal value are certified at construction by a Newton solve driven to
    ||grad|| <= 1e-12.
    """
    if dim < 1 or n_samples < 2:
        raise ParameterError("need dim >= 1 and n_samples >= 2")
    if reg <= 0:
        raise ParameterError("reg must be positive to guarantee a minimizer")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples, dim)) / math.sqrt(dim)
    w_true = rng.standard_normal(dim)
    y = np.where(X @ w_true + 0.3 * rng.standard_normal(n_samples) >= 0, 1.0, -1.0)
    n = n_samples

    def objective(w: Array) -> float:
        z = -y * (X @ w)
        return float(np.mean(np.logaddexp(0.0, z))) + 0.5 * reg * float(np.dot(w, w))

    def gradient(w: Array) -> Array:
        z = -y * (X @ w)
        s = 1.0 / (1.0 + np.exp(-z))
        return -(X.T @ (y * s)) / n + reg * w

    beta = float(np.linalg.eigvalsh(X.T @ X).max()) / (4.0 * n) + reg

    w = np.zeros(dim)
    for _ in range(100):
        g = gradient(w)
        if float(np.linalg.norm(g)) <= 1e-12:
            break
        z = -y * (X @ w)
        s = 1.0 / (1.0 + np.exp(-z))
        H = (X.T * (s * (1.0 - s))) @ X / n + reg * np.eye(dim)
        w = w - np.linalg.solve(H, g)

    return Problem(
        name="logistic",
        dim=dim,
        objective=objective,
        gradient=gradient,
        beta=beta,
        f_star=objective(w),
        w_star=w,
        is_convex=True,
    )


class GradientOracle:
    """Seeded unbiased gradient oracle with isotropic Gaussian noise.

    ``sample(w)`` returns grad f(w) + xi with xi zero-mean Gaussian scaled so
    E||xi||^2 = sigma^2 exactly (per-coordinate std sigma/sqrt(dim)).  The
    stream is deterministic given (seed, call index); independent trials
    should use independent oracle instances with distinct seeds.
    """

    def __init__(self, problem: Problem, sigma: float, seed: int = 0):
        if sigma < 0:
            raise ParameterError("sigma must be nonnegative")
        self.problem = problem
        self.sigma = float(sigma)
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._coord_std = self.sigma / math.sqrt(problem.dim)
        self.calls = 0

    def sample(self, w: Array) -> Array:
        if not self.problem.contains(w):
            raise DomainError("query point lies outside the problem domain")
        g = self.problem.grad(w)
        if self.sigma > 0.0:
            g = g + self._rng.standard_normal(self.problem.dim) * self._coord_std
        self.calls += 1
        return g


def initial_gap(problem: Problem, w1) -> float:
    """Exact F = f(w1) - f* when f* is known."""
    return problem.gap(_as_point(w1, problem.dim))


def initial_distance(problem: Problem, w1) -> float:
    """Exact D = ||w1 - w*|| when w* is known."""
    if problem.w_star is None:
        raise ConfigurationError(f"problem {problem.name!r} has no known minimizer")
    return float(np.linalg.norm(_as_point(w1, problem.dim) - problem.w_star))


def problem_from_config(cfg: dict) -> Problem:
    """Build a problem from a declarative config record.

    Supported kinds: quadratic {dim, beta, w_star?}, nonconvex_smooth
    {dim, beta}, convex_lipschitz {dim, G, D}, logistic {dim, n_samples?,
    seed?, reg?}.
    """
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigurationError("problem config must be a mapping with a 'kind' key")
    kind = cfg["kind"]
    try:
        if kind == "quadratic":
            return make_quadratic(int(cfg["dim"]), float(cfg["beta"]), cfg.get("w_star"))
        if kind == "nonconvex_smooth":
            return make_nonconvex_smooth(int(cfg["dim"]), float(cfg["beta"]))
        if kind == "convex_lipschitz":
            return make_convex_lipschitz(int(cfg["dim"]), float(cfg["G"]), float(cfg["D"]))
        if kind == "logistic":
            return make_logistic(
                int(cfg["dim"]),
                int(cfg.get("n_samples", 200)),
                int(cfg.get("seed", 0)),
                float(cfg.get("reg", 1e-2)),
            )
    except KeyError as exc:
        raise ConfigurationError(f"problem config for {kind!r} is missing {exc}") from exc
    raise ConfigurationError(f"unknown problem kind {kind!r}")
