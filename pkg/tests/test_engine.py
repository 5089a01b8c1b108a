from types import SimpleNamespace

import numpy as np
import pytest
from conftest import random_feasible_delays

from asyncopt import (
    DelaySequence,
    GradientOracle,
    ProtocolError,
    VanillaAsyncSgd,
    constant_delay,
    make_quadratic,
    run_minibatched,
    run_synchronous,
    sgd_convex_smooth,
    staircase_adversarial,
)
from asyncopt import engine


QUAD = make_quadratic(1, 1.0)
W1 = np.array([1.0])


def zero_delays(T):
    return DelaySequence(np.zeros(T, dtype=np.int64))


class TestRoundProtocol:
    def test_zero_delays_match_synchronous(self):
        T = 24
        inner = sgd_convex_smooth(QUAD, W1, T, 1.0, 1.0, seed=4)
        out, log, diag = run_minibatched(inner, GradientOracle(QUAD, 1.0, seed=6),
                                         zero_delays(T), B=1)
        sync = run_synchronous(sgd_convex_smooth(QUAD, W1, T, 1.0, 1.0, seed=4),
                               GradientOracle(QUAD, 1.0, seed=6))
        assert np.array_equal(out.w_hat, sync.w_hat)
        assert all(np.array_equal(a, b) for a, b in zip(out.trace, sync.trace))
        assert log.used == T and log.discarded == 0

    def test_staircase_closed_form_trajectory(self):
        T, tau_max, eta = 20, 4, 2.0
        algo = VanillaAsyncSgd(QUAD, W1, eta)
        engine.run(algo, GradientOracle(QUAD, 0.0), staircase_adversarial(T, tau_max))
        head = np.array(algo.iterates[: tau_max + 2]).ravel()
        t = np.arange(1, tau_max + 3)
        assert np.allclose(head, 1.0 - eta * (t - 1), rtol=1e-14)

    def test_replay_is_bit_identical(self):
        rng = np.random.default_rng(0)
        delays = DelaySequence(random_feasible_delays(rng, 40))
        logs = []
        outs = []
        for _ in range(2):
            algo = VanillaAsyncSgd(QUAD, W1, 0.3)
            out, log = engine.run(algo, GradientOracle(QUAD, 1.0, seed=12), delays)
            logs.append(log)
            outs.append(out)
        assert np.array_equal(outs[0].w_hat, outs[1].w_hat)
        for field in ("d", "played_id", "source_id", "accepted"):
            assert np.array_equal(getattr(logs[0], field), getattr(logs[1], field))

    def test_history_consistency_from_log(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            delays = DelaySequence(random_feasible_delays(rng, 50))
            algo = VanillaAsyncSgd(QUAD, W1, 0.1)
            _, log = engine.run(algo, GradientOracle(QUAD, 1.0, seed=3), delays)
            for i in range(log.rounds):
                source_round = (i + 1) - log.d[i]
                assert log.source_id[i] == log.played_id[source_round - 1]
            assert log.used + log.discarded == log.rounds

    def test_infeasible_delay_rejected(self):
        fake = SimpleNamespace(T=3, delays=np.array([0, 2, 0], dtype=np.int64))
        algo = VanillaAsyncSgd(QUAD, W1, 0.1)
        with pytest.raises(ProtocolError):
            engine.run(algo, GradientOracle(QUAD, 0.0), fake)

    def test_round_log_csv(self, tmp_path):
        algo = VanillaAsyncSgd(QUAD, W1, 0.1)
        _, log = engine.run(algo, GradientOracle(QUAD, 0.0), constant_delay(5, 2))
        path = tmp_path / "rounds.csv"
        log.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,d_t,accepted"
        assert lines[1] == "1,0,1"
        assert len(lines) == 6


class TestHistoryPruning:
    def test_pruned_equals_full(self):
        rng = np.random.default_rng(2)
        for trial in range(10):
            delays = DelaySequence(random_feasible_delays(rng, 60))
            results = []
            for prune in (False, True):
                inner = sgd_convex_smooth(QUAD, W1, 10, 1.0, 1.0, seed=trial)
                out, log, _ = run_minibatched(
                    inner, GradientOracle(QUAD, 1.0, seed=trial), delays,
                    B=2, prune_history=prune)
                results.append((out, log))
            (out_a, log_a), (out_b, log_b) = results
            assert np.array_equal(out_a.w_hat, out_b.w_hat)
            assert np.array_equal(log_a.accepted, log_b.accepted)
            assert np.array_equal(log_a.source_id, log_b.source_id)

    def test_pruned_on_full_staleness(self):
        # staircase forces round tau_max+1 to source round 1; pruning must
        # still have the point available
        delays = staircase_adversarial(30, 10)
        for prune in (False, True):
            algo = VanillaAsyncSgd(QUAD, W1, 0.01)
            out, log = engine.run(algo, GradientOracle(QUAD, 0.0), delays,
                                  prune_history=prune)
            assert log.rounds == 30
            if prune:
                assert np.array_equal(out.w_hat, reference.w_hat)
            else:
                reference = out
