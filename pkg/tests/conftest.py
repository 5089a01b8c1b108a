"""Shared independent test oracles.

These deliberately re-derive quantities by brute force (scans, finite
differences, straight-line simulations) so the package implementations are
checked against an independent route, not against themselves.
"""

from __future__ import annotations

import math

import numpy as np


def brute_quantile(delays, q: float) -> int:
    """Minimal integer tau satisfying both count inequalities, by full scan."""
    d = np.asarray(delays, dtype=np.int64)
    T = d.size
    for tau in range(int(d.max()) + 1):
        le = int((d <= tau).sum())
        ge = int((d >= tau).sum())
        if le >= q * T - 1e-12 and ge >= (1.0 - q) * T - 1e-12:
            return tau
    raise AssertionError("no valid quantile found; the definition guarantees one exists")


def brute_dispatch_floor(delays, B: int) -> int:
    """sup_q floor(qT / (B + tau_q)) by scanning every achievable q = c/T."""
    d = np.asarray(delays, dtype=np.int64)
    T = d.size
    best = 0
    for c in range(1, T + 1):
        tau = brute_quantile(d, c / T)
        best = max(best, c // (B + tau))
    return best


def brute_minibatch_dispatches(delays, B: int) -> int:
    """Straight-line simulation of the filtered accumulation loop."""
    d = np.asarray(delays, dtype=np.int64)
    t = 1
    t_k = 1
    b = 0
    dispatched = 0
    for t in range(1, d.size + 1):
        if t_k <= t - int(d[t - 1]):
            b += 1
            if b == B:
                dispatched += 1
                b = 0
                t_k = t + 1
    return dispatched


def central_difference(f, w: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient estimate."""
    w = np.asarray(w, dtype=float)
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2.0 * h)
    return g


def random_feasible_delays(rng: np.random.Generator, T: int) -> np.ndarray:
    """Uniformly random feasible delay vector (0 <= d_t <= t-1)."""
    i = np.arange(T, dtype=np.int64)
    return rng.integers(0, i + 1)
