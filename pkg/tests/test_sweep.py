import math

import numpy as np
import pytest
from conftest import random_feasible_delays

from asyncopt import (
    ConfigurationError,
    DelaySequence,
    GradientOracle,
    ParameterError,
    Setting,
    SweepSchedule,
    check_sweep_budget,
    constant_delay,
    half_outlier,
    make_convex_lipschitz,
    make_quadratic,
    one_fast_machine,
    run_adaptive_sweep,
    staircase_adversarial,
    sweep_rate_envelope,
)
from asyncopt.optimizers import AVERAGE_ITERATE, AcSa, RANDOM_ITERATE, Sgd

QUAD = make_quadratic(1, 1.0)
W1 = np.array([1.0])


def zero_delays(T):
    return DelaySequence(np.zeros(T, dtype=np.int64))


class TestScheduleRules:
    def test_epoch_lengths_double(self):
        s = SweepSchedule(setting="nonconvex_sgd", sigma=0.0, beta=1.0, F=1.0)
        assert [s.epoch_length(i) for i in range(1, 6)] == [1, 2, 4, 8, 16]

    def test_nonconvex_batch_rule(self):
        s = SweepSchedule(setting="nonconvex_sgd", sigma=1.0, beta=1.0, F=0.5)
        # sigma^2 K / (2 beta F) = K exactly
        assert [s.batch_size(i) for i in range(1, 5)] == [1, 2, 4, 8]
        s0 = SweepSchedule(setting="nonconvex_sgd", sigma=0.0, beta=1.0, F=0.5)
        assert all(s0.batch_size(i) == 1 for i in range(1, 8))

    def test_acsa_batch_rule(self):
        s = SweepSchedule(setting="acsa_convex_smooth", sigma=2.0, beta=1.0, D=1.0)
        for i in range(1, 6):
            K = 2 ** (i - 1)
            assert s.batch_size(i) == max(1, math.ceil(4 * K * (K + 1) ** 2 / 12 - 1e-9))

    def test_convex_smooth_batch_rule(self):
        s = SweepSchedule(setting="sgd_convex_smooth", sigma=3.0, beta=2.0, D=1.5)
        for i in range(1, 6):
            K = 2 ** (i - 1)
            assert s.batch_size(i) == max(1, math.ceil(9 * K / (4 * 2.25) - 1e-9))

    def test_psgd_batch_constant(self):
        s = SweepSchedule(setting="psgd_convex_lipschitz", sigma=3.0, D=1.0, G=2.0)
        sizes = [s.batch_size(i) for i in range(1, 8)]
        assert sizes == [math.ceil(9 / 4)] * 7

    def test_batch_sizes_nondecreasing(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = SweepSchedule(setting="nonconvex_sgd", sigma=float(rng.uniform(0, 3)),
                              beta=float(rng.uniform(0.5, 2)), F=float(rng.uniform(0.2, 2)))
            sizes = [s.batch_size(i) for i in range(1, 12)]
            assert all(a <= b for a, b in zip(sizes, sizes[1:]))

    def test_missing_constants(self):
        with pytest.raises(ConfigurationError):
            SweepSchedule(setting="nonconvex_sgd", sigma=1.0, beta=1.0)
        with pytest.raises(ConfigurationError):
            SweepSchedule(setting="psgd_convex_lipschitz", sigma=1.0, D=1.0)

    def test_inner_stepsizes(self):
        beta = 2.0
        p = make_quadratic(1, beta)
        s = SweepSchedule(setting="nonconvex_sgd", sigma=1.0, beta=beta, F=0.5)
        inner = s.make_inner(p, W1, 3, seed=0)
        assert isinstance(inner, Sgd) and inner.gamma == 1 / beta
        assert inner.output_rule == RANDOM_ITERATE

        s = SweepSchedule(setting="acsa_convex_smooth", sigma=1.0, beta=beta, D=1.0)
        inner = s.make_inner(p, W1, 3, seed=0)
        assert isinstance(inner, AcSa) and inner.gamma == 1 / (4 * beta)

        G, D = 1.5, 2.0
        lp = make_convex_lipschitz(1, G, D)
        s = SweepSchedule(setting="psgd_convex_lipschitz", sigma=1.0, D=D, G=G)
        inner = s.make_inner(lp, np.zeros(1), 2, seed=0)
        K, B = s.epoch_length(2), s.batch_size(2)
        assert inner.gamma == pytest.approx(D / math.sqrt((G**2 + 1.0 / B) * K))
        assert inner.output_rule == AVERAGE_ITERATE


class TestSweepExecution:
    def test_noiseless_epoch_accounting(self):
        for T in (15, 100, 127, 128):
            sched = SweepSchedule(setting="nonconvex_sgd", sigma=0.0, beta=1.0, F=0.5)
            res, log = run_adaptive_sweep(sched, QUAD, GradientOracle(QUAD, 0.0),
                                          zero_delays(T), W1)
            assert res.completed == math.floor(math.log2(T + 1))
            for rec in res.epochs:
                assert rec.rounds == rec.K * rec.B
            assert sum(r.rounds for r in res.epochs) <= T

    def test_epoch_rounds_lower_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            delays = DelaySequence(random_feasible_delays(rng, 200))
            sched = SweepSchedule(setting="nonconvex_sgd", sigma=1.0, beta=1.0, F=0.5)
            res, _ = run_adaptive_sweep(sched, QUAD,
                                        GradientOracle(QUAD, 1.0, seed=rng.integers(2**32)),
                                        delays, W1, seed=int(rng.integers(2**32)))
            for rec in res.epochs:
                assert rec.rounds >= rec.K * rec.B
                assert rec.used == rec.K * rec.B

    def test_fallback_returns_w1_exactly(self):
        sigma = 100.0
        sched = SweepSchedule(setting="nonconvex_sgd", sigma=sigma, beta=1.0, F=0.5)
        res, _ = run_adaptive_sweep(sched, QUAD, GradientOracle(QUAD, sigma, seed=1),
                                    zero_delays(8), W1)
        assert res.completed == 0
        assert np.array_equal(res.w_hat, W1)
        # the no-epoch regime indeed implies the smoothness fallback bound
        F, T = 0.5, 8
        assert QUAD.grad_sq(W1) <= 2 * 1.0 * F
        assert 2 * 1.0 * F < sigma**2 / T

    def test_output_is_last_completed_epoch(self):
        sched = SweepSchedule(setting="nonconvex_sgd", sigma=0.0, beta=1.0, F=0.5)
        res, _ = run_adaptive_sweep(sched, QUAD, GradientOracle(QUAD, 0.0),
                                    zero_delays(40), W1)
        assert np.array_equal(res.w_hat, res.outputs[-1])
        assert np.array_equal(res.w_hat, res.epochs[-1].w_hat)

    def test_epoch_csv(self, tmp_path):
        sched = SweepSchedule(setting="nonconvex_sgd", sigma=0.0, beta=1.0, F=0.5)
        res, _ = run_adaptive_sweep(sched, QUAD, GradientOracle(QUAD, 0.0),
                                    zero_delays(40), W1)
        path = tmp_path / "epochs.csv"
        res.to_csv(path, metric=QUAD.grad_sq)
        lines = path.read_text().splitlines()
        assert lines[0] == "i,K_i,B_i,rounds_consumed,used,discarded,metric"
        assert len(lines) == res.completed + 1


class TestBudgetInequality:
    def test_zero_delays(self):
        sched = SweepSchedule(setting="nonconvex_sgd", sigma=0.0, beta=1.0, F=0.5)
        for T in (10, 31, 32, 100):
            res, _ = run_adaptive_sweep(sched, QUAD, GradientOracle(QUAD, 0.0),
                                        zero_delays(T), W1)
            report = check_sweep_budget(res, zero_delays(T), sched)
            assert report.passed
            # with B_i = 1 and tau = 0 the inequality reads T < 2 K_{I+1}
            assert T < 2 * report.K_next

    def test_staircase_quantile_point(self):
        T, tau_max = 64, 9
        delays = staircase_adversarial(T, tau_max)
        sched = SweepSchedule(setting="nonconvex_sgd", sigma=0.0, beta=1.0, F=0.5)
        res, _ = run_adaptive_sweep(sched, QUAD, GradientOracle(QUAD, 0.0), delays, W1)
        report = check_sweep_budget(res, delays, sched)
        assert report.passed
        fresh = next(p for p in report.points if p.tau == 0)
        assert fresh.qT == T - tau_max  # zero-delay rounds: t=1 plus the tail

    def test_constant_delay_topmost_point(self):
        T, tau = 96, 7
        delays = constant_delay(T, tau)
        sched = SweepSchedule(setting="nonconvex_sgd", sigma=1.0, beta=1.0, F=0.5)
        res, _ = run_adaptive_sweep(sched, QUAD, GradientOracle(QUAD, 1.0, seed=3),
                                    delays, W1, seed=4)
        report = check_sweep_budget(res, delays, sched)
        assert report.passed
        top = next(p for p in report.points if p.q == 1.0)
        assert top.tau == tau
        assert top.limit == 2 * (report.B_next + tau) * report.K_next

    def test_requires_completed_epoch(self):
        sched = SweepSchedule(setting="nonconvex_sgd", sigma=50.0, beta=1.0, F=0.5)
        res, _ = run_adaptive_sweep(sched, QUAD, GradientOracle(QUAD, 50.0, seed=5),
                                    zero_delays(4), W1)
        with pytest.raises(ParameterError):
            check_sweep_budget(res, zero_delays(4), sched)


class TestEnvelope:
    def test_zero_delays_infimum_at_q1(self):
        T, sigma, beta, F = 256, 1.0, 1.0, 0.5
        env = sweep_rate_envelope("nonconvex_sgd", zero_delays(T), sigma=sigma,
                                  beta=beta, F=F)
        assert env.best.q == 1.0 and env.best.tau == 0
        expected = 24 * beta * F / T + 24 * sigma * math.sqrt(beta * F) / math.sqrt(T)
        assert env.value == pytest.approx(expected, rel=1e-12)

    def test_half_outlier_prefers_small_quantile(self):
        env = sweep_rate_envelope("nonconvex_sgd", half_outlier(256), sigma=1.0,
                                  beta=1.0, F=0.5)
        worst = next(p for p in env.points if p.q == 1.0)
        assert env.best.q <= 0.51
        assert env.value < 0.5 * worst.value

    def test_one_fast_machine_noiseless(self):
        seq = one_fast_machine(8, 4)
        env = sweep_rate_envelope("nonconvex_sgd", seq, sigma=0.0, beta=1.0, F=0.5)
        assert env.best.q == pytest.approx(8 / seq.T)
        assert env.best.tau == 0

    def test_acsa_coefficient_variants(self):
        delays = zero_delays(64)
        stated = sweep_rate_envelope("acsa_convex_smooth", delays, sigma=1.0,
                                     beta=1.0, D=1.0)
        tighter = sweep_rate_envelope("acsa_convex_smooth", delays, sigma=1.0,
                                      beta=1.0, D=1.0, acsa_noise_coeff=48.0)
        assert tighter.value < stated.value
        expected = 192 / 64**2 + 72 / 8
        assert stated.value == pytest.approx(expected)

    def test_all_settings_evaluate(self):
        delays = half_outlier(64)
        for setting, kwargs in [
            ("nonconvex_sgd", {"beta": 1.0, "F": 0.5}),
            ("acsa_convex_smooth", {"beta": 1.0, "D": 1.0}),
            ("sgd_convex_smooth", {"beta": 1.0, "D": 1.0}),
            ("psgd_convex_lipschitz", {"D": 1.0, "G": 1.0}),
        ]:
            env = sweep_rate_envelope(setting, delays, sigma=1.0, **kwargs)
            assert env.value > 0
            assert env.setting is Setting(setting)
