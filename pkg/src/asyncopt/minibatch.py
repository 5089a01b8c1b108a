"""Asynchronous mini-batching: hold the inner query point fixed, filter
gradients by source round, and average B accepted gradients per response.

A gradient received at round t was evaluated at the point played at round
t - d_t.  In exact mode it is accepted iff t_k <= t - d_t, where t_k is the
first round at which the current (k-th) query was played; every accepted
gradient is then a gradient of the k-th query point.  The relaxed mode
accepts against t_{max(k-2, 1)} instead, allowing gradients of the two
previous query points into the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import engine
from .delays import DelaySequence, quantile_support
from .errors import ParameterError, ScheduleError
from .optimizers import FixedQueryAlgorithm, OptimizerOutput, QueryAlgorithm
from .problems import GradientOracle, make_quadratic


class Strictness(str, Enum):
    EXACT = "exact"
    RELAXED_K_MINUS_2 = "relaxed_k_minus_2"


@dataclass(frozen=True)
class Schedule:
    """Derived wrapper parameters: batch size, query budget, effective noise."""

    B: int
    K: int
    sigma_eff: float


def derive_schedule(T: int, q: float, tau_hat_q: int, sigma: float) -> Schedule:
    """Batch size B = max{1, tau_hat}, budget K = floor(qT / (1 + 2 tau_hat)),
    effective noise sigma / sqrt(B)."""
    if T < 1:
        raise ParameterError("T must be >= 1")
    if not 0.0 < q <= 1.0:
        raise ParameterError("q must lie in (0, 1]")
    if tau_hat_q < 0:
        raise ParameterError("tau_hat_q must be nonnegative")
    if sigma < 0:
        raise ParameterError("sigma must be nonnegative")
    B = max(1, int(tau_hat_q))
    # guard binary-float q values that should hit an integer exactly
    K = int(math.floor(q * T / (1.0 + 2.0 * tau_hat_q) + 1e-9))
    if K < 1:
        raise ScheduleError(
            f"horizon too short for this quantile bound: floor({q} * {T} / {1 + 2 * tau_hat_q}) = 0"
        )
    return Schedule(B=B, K=K, sigma_eff=sigma / math.sqrt(B))


@dataclass(frozen=True)
class MiniBatchConfig:
    """User-facing wrapper settings; B=None means the derived max{1, tau_hat}."""

    q: float
    tau_hat_q: int
    B: Optional[int] = None
    strictness: Strictness = Strictness.EXACT

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ParameterError("q must lie in (0, 1]")
        if self.tau_hat_q < 0:
            raise ParameterError("tau_hat_q must be nonnegative")
        if self.B is not None and self.B < 1:
            raise ParameterError("B must be >= 1")
        object.__setattr__(self, "strictness", Strictness(self.strictness))


@dataclass
class MiniBatchDiagnostics:
    K_target: int
    K_dispatched: int
    used: int
    discarded: int
    complete: bool

    def to_json(self) -> dict:
        return {
            "K_target": self.K_target,
            "K_dispatched": self.K_dispatched,
            "used": self.used,
            "discarded": self.discarded,
        }


class MiniBatchRunner:
    """Streaming adapter that mini-batches an inner query algorithm.

    ``round_offset`` is the number of protocol rounds executed before this
    runner starts (used by the epoch sweep, which shares one global round
    counter).  ``_source_round_offset`` is a fault-injection hook for the
    filter-mutation self-test; it shifts the accepted source-round threshold
    and must stay 0 in real runs.
    """

    def __init__(self, inner: QueryAlgorithm, B: int,
                 strictness: Strictness = Strictness.EXACT,
                 round_offset: int = 0, _source_round_offset: int = 0):
        if B < 1:
            raise ParameterError("B must be >= 1")
        if inner.responses > 0:
            raise ParameterError("inner algorithm must be fresh")
        self.inner = inner
        self.B = int(B)
        self.strictness = Strictness(strictness)
        self._src_offset = int(_source_round_offset)
        self._t = int(round_offset)
        self._t_starts: list[int] = [0]  # 1-indexed by query k
        self.k = 0
        self.dispatched = 0
        self.used = 0
        self.discarded = 0
        self._done = False
        self._final: Optional[OptimizerOutput] = None
        self._begin_batch()

    def _begin_batch(self) -> None:
        self._w = self.inner.query()
        self.k += 1
        self._t_starts.append(self._t + 1)
        self._acc = np.zeros_like(np.asarray(self._w, dtype=float))
        self._b = 0

    def current_point(self):
        return self._w

    def point_id(self) -> int:
        return self.k

    def _accepts(self, source_round: int) -> bool:
        if self.strictness is Strictness.EXACT:
            k_ref = self.k
        else:
            k_ref = max(self.k - 2, 1)
        return source_round >= self._t_starts[k_ref] + self._src_offset

    def receive(self, g, d: int) -> bool:
        if self._done:
            raise ParameterError("runner already produced its output")
        self._t += 1
        accepted = self._accepts(self._t - int(d))
        if accepted:
            self.used += 1
            self._acc = self._acc + np.asarray(g, dtype=float)
            self._b += 1
            if self._b == self.B:
                self.inner.respond(self._acc / self.B)
                self.dispatched += 1
                if self.inner.complete:
                    self._done = True
                    self._final = self.inner.finalize()
                else:
                    self._begin_batch()
        else:
            self.discarded += 1
        return accepted

    def done(self) -> bool:
        return self._done

    @property
    def complete(self) -> bool:
        return self._done

    def output(self) -> OptimizerOutput:
        if self._final is not None:
            return self._final
        # incomplete run: freeze the inner state as the current query point
        return OptimizerOutput(w_hat=np.array(self._w, dtype=float))

    def diagnostics(self) -> MiniBatchDiagnostics:
        return MiniBatchDiagnostics(
            K_target=self.inner.K,
            K_dispatched=self.dispatched,
            used=self.used,
            discarded=self.discarded,
            complete=self._done,
        )


def run_minibatched(inner: QueryAlgorithm, oracle: GradientOracle,
                    delays: DelaySequence, *, B: int,
                    strictness: Strictness = Strictness.EXACT,
                    prune_history: bool = False,
                    ) -> tuple[OptimizerOutput, engine.RoundLog, MiniBatchDiagnostics]:
    """Run the mini-batching wrapper over the round protocol.

    When the horizon ends before the inner algorithm got its K responses the
    run is *incomplete*: the returned output freezes the current query point
    and the diagnostics record the shortfall, rather than raising.
    """
    runner = MiniBatchRunner(inner, B=B, strictness=strictness)
    output, log = engine.run(runner, oracle, delays, prune_history=prune_history)
    return output, log, runner.diagnostics()


def dispatch_floor(delays: DelaySequence, B: int) -> int:
    """Guaranteed number of dispatched batches in T rounds with batch size B.

    Equals sup over q in (0,1] of floor(qT / (B + tau_q)).  The supremum is
    attained at one of the points q = count(d <= v)/T for a distinct delay
    value v (where tau_q = v and qT is an integer), so the computation below
    is exact.
    """
    if B < 1:
        raise ParameterError("B must be >= 1")
    return max(count // (B + value) for count, value in quantile_support(delays))


def count_dispatches(delays: DelaySequence, B: int,
                     strictness: Strictness = Strictness.EXACT,
                     _source_round_offset: int = 0) -> int:
    """Number of batches the wrapper dispatches over the full horizon.

    The acceptance pattern depends only on the delays, so this drives the
    real runner with a fixed query point and a noiseless scalar oracle.
    """
    inner = FixedQueryAlgorithm(np.zeros(1))
    runner = MiniBatchRunner(inner, B=B, strictness=strictness,
                             _source_round_offset=_source_round_offset)
    oracle = GradientOracle(make_quadratic(1, 1.0), sigma=0.0)
    engine.run(runner, oracle, delays)
    return runner.dispatched


@dataclass
class DispatchCountReport:
    dispatched: int
    floor: int

    @property
    def passed(self) -> bool:
        return self.dispatched >= self.floor


def check_dispatch_count(log_or_count, delays: DelaySequence, B: int) -> DispatchCountReport:
    """Assert the dispatched-batch count meets the guaranteed floor.

    Accepts either a RoundLog from a full-horizon run (dispatches = used // B)
    or a dispatch count directly.
    """
    if isinstance(log_or_count, engine.RoundLog):
        dispatched = log_or_count.used // B
    else:
        dispatched = int(log_or_count)
    return DispatchCountReport(dispatched=dispatched, floor=dispatch_floor(delays, B))
