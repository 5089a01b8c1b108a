"""Round protocol executor.

For t = 1..T the algorithm plays w_t, and the environment returns (g_t, d_t)
where g_t is a stochastic gradient drawn at the stored point w_{t-d_t}.  The
oracle's noise stream depends only on delivery order, never on the delay
values, so delays stay probabilistically independent of the observed
gradients.
"""

from __future__ import annotations

import csv
from typing import Optional

import numpy as np

from .delays import DelaySequence
from .errors import ProtocolError
from .optimizers import OptimizerOutput
from .problems import GradientOracle


class RoundLog:
    """Per-round record of the protocol: delays, point ids, acceptance flags.

    ``source_id[i]`` is the id of the point played at round (i+1) - d, i.e.
    the point the delivered gradient was evaluated at.
    """

    def __init__(self, d: np.ndarray, played_id: np.ndarray,
                 source_id: np.ndarray, accepted: np.ndarray):
        self.d = d
        self.played_id = played_id
        self.source_id = source_id
        self.accepted = accepted

    @property
    def rounds(self) -> int:
        return int(self.d.size)

    @property
    def used(self) -> int:
        return int(self.accepted.sum())

    @property
    def discarded(self) -> int:
        return self.rounds - self.used

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "d_t", "accepted"])
            for i in range(self.rounds):
                writer.writerow([i + 1, int(self.d[i]), int(self.accepted[i])])


def run(algorithm, oracle: GradientOracle, delays: DelaySequence, *,
        stop_when_done: bool = True,
        prune_history: bool = False) -> tuple[OptimizerOutput, RoundLog]:
    """Execute the round protocol for up to T rounds.

    ``algorithm`` is any streaming algorithm (current_point / point_id /
    receive / done / output).  Stops early once the algorithm reports done.
    With ``prune_history`` the engine retains only the points that some
    future round still sources, instead of the full history; results are
    identical.
    """
    T = delays.T
    d_arr = delays.delays

    last_use: Optional[np.ndarray] = None
    if prune_history:
        # last_use[s] = final round that sources point s (0 if never sourced)
        last_use = np.zeros(T + 1, dtype=np.int64)
        for t in range(1, T + 1):
            last_use[t - int(d_arr[t - 1])] = t

    history: dict[int, tuple[np.ndarray, int]] = {}
    d_log = np.zeros(T, dtype=np.int64)
    played_log = np.zeros(T, dtype=np.int64)
    source_log = np.zeros(T, dtype=np.int64)
    accepted_log = np.zeros(T, dtype=bool)

    rounds = 0
    for t in range(1, T + 1):
        if stop_when_done and algorithm.done():
            break
        dt = int(d_arr[t - 1])
        if not 0 <= dt <= t - 1:
            raise ProtocolError(f"infeasible delay d_{t} = {dt}")
        w_t = algorithm.current_point()
        pid = int(algorithm.point_id())
        if last_use is None or last_use[t] >= t:
            history[t] = (np.array(w_t, dtype=float), pid)
        source = t - dt
        w_src, src_id = history[source]
        g = oracle.sample(w_src)
        accepted = bool(algorithm.receive(g, dt))
        d_log[t - 1] = dt
        played_log[t - 1] = pid
        source_log[t - 1] = src_id
        accepted_log[t - 1] = accepted
        rounds = t
        if last_use is not None and last_use[source] <= t and source in history:
            del history[source]

    log = RoundLog(
        d=d_log[:rounds],
        played_id=played_log[:rounds],
        source_id=source_log[:rounds],
        accepted=accepted_log[:rounds],
    )
    return algorithm.output(), log
