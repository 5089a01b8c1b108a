"""Delay-sequence generators, exact quantile statistics, and the multi-worker
compute-time simulation.

A delay sequence d_1..d_T assigns each round t the staleness of the gradient
it delivers: the gradient seen at round t was evaluated at the point played
at round t - d_t.  Feasibility (d_t <= t-1) is enforced at construction.
Every generator is a pure function of its arguments, and sequences are
immutable once built.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError

SCRIPTED = "scripted"
MACHINE_SIMULATED = "machine_simulated"


@dataclass(frozen=True)
class DelaySequence:
    """Immutable vector of per-round integer delays; delays[i] = d_{i+1}."""

    delays: np.ndarray
    origin: str = SCRIPTED
    machines: Optional[int] = None

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=np.int64)
        if d.ndim != 1 or d.size < 1:
            raise ParameterError("a delay sequence needs at least one round")
        if (d < 0).any():
            raise ParameterError("delays must be nonnegative")
        if (d > np.arange(d.size, dtype=np.int64)).any():
            raise ParameterError("infeasible delay: d_t must not exceed t-1")
        if self.origin == MACHINE_SIMULATED and (self.machines is None or self.machines < 1):
            raise ParameterError("machine-simulated sequences must record a worker count")
        d.setflags(write=False)
        object.__setattr__(self, "delays", d)

    @property
    def T(self) -> int:
        return int(self.delays.size)

    def __len__(self) -> int:
        return self.T

    def delay_at(self, t: int) -> int:
        """d_t for 1-based round index t."""
        if not 1 <= t <= self.T:
            raise ParameterError(f"round index {t} outside 1..{self.T}")
        return int(self.delays[t - 1])


def _min_quantile(sorted_delays: np.ndarray, q: float) -> int:
    """Minimal integer tau with Pr(d <= tau) >= q and Pr(d >= tau) >= 1-q.

    For integer data this is the ceil(qT)-th order statistic, which always
    satisfies both inequalities; anything smaller fails the first.
    """
    if not 0.0 < q <= 1.0:
        raise ParameterError("quantile level q must lie in (0, 1]")
    T = sorted_delays.size
    # guard binary-float q values that should hit an integer count exactly
    m = math.ceil(q * T - 1e-9)
    m = min(max(m, 1), T)
    return int(sorted_delays[m - 1])


@dataclass(frozen=True)
class DelayStats:
    """Exact delay statistics: mean, max, and the minimal valid q-quantiles."""

    tau_avg: float
    tau_med: int
    tau_max: int
    _sorted: np.ndarray

    def quantile(self, q: float) -> int:
        return _min_quantile(self._sorted, q)

    def to_json(self) -> dict:
        return {
            "T": int(self._sorted.size),
            "tau_avg": self.tau_avg,
            "tau_med": self.tau_med,
            "tau_max": self.tau_max,
        }


def _delay_values(seq) -> np.ndarray:
    """Delay multiset from a DelaySequence or a raw array of delays.

    Quantile statistics depend only on the multiset of values, so raw arrays
    (which need not satisfy the per-round feasibility constraint) are
    accepted here.
    """
    d = seq.delays if isinstance(seq, DelaySequence) else np.asarray(seq, dtype=np.int64)
    if d.ndim != 1 or d.size < 1:
        raise ParameterError("need at least one delay value")
    if (d < 0).any():
        raise ParameterError("delays must be nonnegative")
    return d


def compute_stats(seq) -> DelayStats:
    s = np.sort(_delay_values(seq))
    s.setflags(write=False)
    return DelayStats(
        tau_avg=float(s.mean()),
        tau_med=_min_quantile(s, 0.5),
        tau_max=int(s[-1]),
        _sorted=s,
    )


def quantile_support(seq) -> list[tuple[int, int]]:
    """Distinct delay values with their cumulative counts, ascending.

    Returns pairs (count_le, value): value is the minimal valid q-quantile at
    q = count_le / T, and these points are the only places the quantile map
    changes, so suprema/infima over q reduce to exact finite enumeration.
    """
    values, counts = np.unique(_delay_values(seq), return_counts=True)
    cum = np.cumsum(counts)
    return [(int(c), int(v)) for c, v in zip(cum, values)]


def constant_delay(T: int, tau: int) -> DelaySequence:
    """d_t = min(tau, t-1): constant delay tau after a feasibility warm-up."""
    if T < 1:
        raise ParameterError("T must be >= 1")
    if tau < 0 or tau >= T:
        raise ParameterError("need 0 <= tau <= T-1")
    t = np.arange(T, dtype=np.int64)
    return DelaySequence(np.minimum(tau, t))


def staircase_adversarial(T: int, tau_max: int) -> DelaySequence:
    """d_t = t-1 for t <= tau_max+1 and 0 afterwards.

    The first tau_max+1 rounds all deliver gradients of the initial point;
    average delay is (tau_max+1) tau_max / (2T).  Producible by tau_max+1
    workers: one per warm-up round, the last one serving every later round.
    """
    if T < 3:
        raise ParameterError("T must be >= 3")
    if not 1 <= tau_max <= T - 2:
        raise ParameterError("need 1 <= tau_max <= T-2")
    d = np.zeros(T, dtype=np.int64)
    d[: tau_max + 1] = np.arange(tau_max + 1, dtype=np.int64)
    return DelaySequence(d)


def half_outlier(T: int) -> DelaySequence:
    """d_t = 0 for t <= T/2 + 1, d_t = t-1 otherwise (T even).

    The median delay is 0 while the average delay grows linearly in T.
    """
    if T < 4 or T % 2 != 0:
        raise ParameterError("T must be even and >= 4")
    d = np.zeros(T, dtype=np.int64)
    cut = T // 2 + 1
    d[cut:] = np.arange(cut, T, dtype=np.int64)
    return DelaySequence(d)


def one_fast_machine(n: int, M: int) -> DelaySequence:
    """One worker n times faster than the other M-1: T = n + M - 1 rounds.

    d_t = 0 for t <= n and t-1 afterwards; the fraction of fresh rounds is
    q = n/T, and the q-quantile delay at that level is 0.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    if M < 2:
        raise ParameterError("M must be >= 2")
    T = n + M - 1
    d = np.zeros(T, dtype=np.int64)
    d[n:] = np.arange(n, T, dtype=np.int64)
    return DelaySequence(d)


@dataclass(frozen=True)
class WorkerSchedule:
    """Per-worker compute-time model: a shifted two-component Poisson mixture.

    Each compute time is 1 + Poisson(rate) with probability fast_weight and
    1 + Poisson(slow_factor * rate) otherwise, so all compute times are >= 1.
    """

    machines: int
    rate: float
    slow_factor: float = 150.0
    fast_weight: float = 0.92
    seed: int = 0

    def __post_init__(self):
        if self.machines < 1:
            raise ParameterError("machines must be >= 1")
        if self.rate <= 0:
            raise ParameterError("rate must be positive")
        if not 0.0 < self.fast_weight <= 1.0:
            raise ParameterError("fast_weight must lie in (0, 1]")


def worker_delays(T: int, M: int, next_time: Callable[[int], int]) -> np.ndarray:
    """Merge per-worker completion events into a delay sequence of length T.

    Each worker starts computing at the model that is current when it starts;
    rounds advance one per delivered gradient.  d_t = t - r, where r is the
    round at which the delivered gradient's query point became current.
    Simultaneous completions deliver lowest worker index first.
    """
    if T < 1:
        raise ParameterError("T must be >= 1")
    if M < 1:
        raise ParameterError("M must be >= 1")
    heap = []
    for m in range(M):
        c = int(next_time(m))
        if c < 1:
            raise ParameterError("compute times must be >= 1")
        heapq.heappush(heap, (c, m, 1))
    delays = np.empty(T, dtype=np.int64)
    for t in range(1, T + 1):
        time, m, query_round = heapq.heappop(heap)
        delays[t - 1] = t - query_round
        c = int(next_time(m))
        if c < 1:
            raise ParameterError("compute times must be >= 1")
        heapq.heappush(heap, (time + c, m, t + 1))
    return delays


def simulate_workers(T: int, schedule: WorkerSchedule) -> DelaySequence:
    """Two-phase worker simulation: draw compute times, then merge arrivals."""
    M = schedule.machines
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(schedule.seed).spawn(M)]

    def draw(m: int) -> int:
        rng = streams[m]
        lam = schedule.rate if rng.random() < schedule.fast_weight else schedule.slow_factor * schedule.rate
        return 1 + int(rng.poisson(lam))

    d = worker_delays(T, M, draw)
    return DelaySequence(d, origin=MACHINE_SIMULATED, machines=M)


def save_delays_csv(seq: DelaySequence, path) -> None:
    """One-column CSV with header d_t."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["d_t"])
        for d in seq.delays:
            writer.writerow([int(d)])


def load_delays_csv(path) -> DelaySequence:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "d_t":
            raise ParameterError(f"{path}: expected a one-column CSV with header 'd_t'")
        delays = [int(row[0]) for row in reader if row]
    return DelaySequence(np.asarray(delays, dtype=np.int64))


def save_delays_json(seq: DelaySequence, path) -> None:
    with open(path, "w") as fh:
        json.dump([int(d) for d in seq.delays], fh)


def load_delays_json(path) -> DelaySequence:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ParameterError(f"{path}: expected a JSON array of delays")
    return DelaySequence(np.asarray(data, dtype=np.int64))


def save_delays(seq: DelaySequence, path) -> None:
    """Write CSV or JSON depending on the file suffix."""
    if Path(path).suffix.lower() == ".json":
        save_delays_json(seq, path)
    else:
        save_delays_csv(seq, path)


def load_delays(path) -> DelaySequence:
    if Path(path).suffix.lower() == ".json":
        return load_delays_json(path)
    return load_delays_csv(path)
