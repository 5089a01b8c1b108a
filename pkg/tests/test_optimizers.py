import math

import numpy as np
import pytest

from asyncopt import (
    ConfigurationError,
    GradientOracle,
    OptimizerOutput,
    ParameterError,
    ProtocolError,
    VanillaAsyncSgd,
    acsa_accelerated,
    make_convex_lipschitz,
    make_quadratic,
    make_nonconvex_smooth,
    psgd_convex_lipschitz,
    rate_acsa,
    rate_psgd_lipschitz,
    rate_rsgd_nonconvex,
    rate_sgd_convex_smooth,
    run_synchronous,
    sgd_convex_smooth,
    sgd_nonconvex,
)
from asyncopt.optimizers import trace_to_csv


QUAD = make_quadratic(1, 1.0)
W1 = np.array([1.0])


class TestQueryProtocol:
    def test_strict_alternation(self):
        alg = sgd_nonconvex(QUAD, W1, K=2, sigma_in=0.0, F=0.5)
        alg.query()
        with pytest.raises(ProtocolError):
            alg.query()
        alg.respond(np.array([1.0]))
        with pytest.raises(ProtocolError):
            alg.respond(np.array([1.0]))

    def test_budget_and_finalize(self):
        alg = sgd_nonconvex(QUAD, W1, K=1, sigma_in=0.0, F=0.5)
        with pytest.raises(ProtocolError):
            alg.finalize()
        alg.respond(alg.query() * 0)
        with pytest.raises(ProtocolError):
            alg.query()
        assert isinstance(alg.finalize(), OptimizerOutput)

    def test_k_validation(self):
        with pytest.raises(ParameterError):
            sgd_nonconvex(QUAD, W1, K=0, sigma_in=0.0, F=0.5)


class TestSgdNonconvex:
    def test_deterministic_stepsize_branch(self):
        alg = sgd_nonconvex(QUAD, W1, K=5, sigma_in=0.0, F=0.5)
        assert alg.gamma == 1.0

    def test_tuned_stepsize_formula(self):
        beta, F, sigma, K = 2.0, 0.7, 1.3, 16
        p = make_quadratic(1, beta)
        alg = sgd_nonconvex(p, W1, K=K, sigma_in=sigma, F=F)
        assert alg.gamma == min(1 / beta, math.sqrt(2 * F / (sigma**2 * beta * K)))

    def test_one_step_reaches_minimizer(self):
        alg = sgd_nonconvex(QUAD, W1, K=2, sigma_in=0.0, F=0.5)
        out = run_synchronous(alg, GradientOracle(QUAD, 0.0))
        assert out.trace[0] == pytest.approx([1.0])
        assert out.trace[1] == pytest.approx([0.0])  # gamma = 1/beta jumps to w*

    def test_output_reproducible(self):
        for _ in range(2):
            alg = sgd_nonconvex(QUAD, W1, K=3, sigma_in=1.0, F=0.5, seed=5)
            out = run_synchronous(alg, GradientOracle(QUAD, 1.0, seed=9))
            if _ == 0:
                first = out.w_hat
        assert np.array_equal(first, out.w_hat)

    def test_monte_carlo_rate(self):
        # scaled-down version of the acceptance battery
        problem = make_nonconvex_smooth(2, 1.0)
        w1 = np.full(2, 1.2)
        F = problem.gap(w1)
        K, sigma, trials = 32, 1.0, 100
        total = 0.0
        for s in range(trials):
            alg = sgd_nonconvex(problem, w1, K, sigma, F, seed=s)
            out = run_synchronous(alg, GradientOracle(problem, sigma, seed=1000 + s))
            total += problem.grad_sq(out.w_hat)
        assert total / trials <= rate_rsgd_nonconvex(1.0, F, sigma, K) * 1.05

    def test_missing_beta(self):
        p = make_convex_lipschitz(1, 1.0, 1.0)
        with pytest.raises(ConfigurationError):
            sgd_nonconvex(p, np.zeros(1), K=4, sigma_in=0.0, F=0.5)


class TestSgdConvexSmooth:
    def test_stepsize_formula(self):
        beta, D, sigma, K = 2.0, 1.5, 0.8, 25
        p = make_quadratic(1, beta)
        alg = sgd_convex_smooth(p, W1, K=K, sigma_in=sigma, D=D)
        assert alg.gamma == min(1 / beta, math.sqrt(D * D / (sigma**2 * K)))

    def test_noiseless_suboptimality(self):
        # expected gap of the random-iterate output is the trace average,
        # which equals F/K here and sits below beta D^2 / K
        for K in (4, 16, 64):
            alg = sgd_convex_smooth(QUAD, W1, K=K, sigma_in=0.0, D=1.0)
            out = run_synchronous(alg, GradientOracle(QUAD, 0.0))
            mean_gap = np.mean([QUAD.gap(w) for w in out.trace])
            assert mean_gap == pytest.approx(QUAD.gap(W1) / K)
            assert mean_gap <= rate_sgd_convex_smooth(1.0, 1.0, 0.0, K)

    def test_single_query(self):
        alg = sgd_convex_smooth(QUAD, W1, K=1, sigma_in=0.0, D=1.0)
        out = run_synchronous(alg, GradientOracle(QUAD, 0.0))
        assert out.w_hat == pytest.approx([1.0])  # only w_1 can be sampled

    def test_monte_carlo_rate(self):
        K, sigma, trials = 32, 1.0, 200
        total = 0.0
        for s in range(trials):
            alg = sgd_convex_smooth(QUAD, W1, K, sigma, 1.0, seed=s)
            out = run_synchronous(alg, GradientOracle(QUAD, sigma, seed=5000 + s))
            total += QUAD.gap(out.w_hat)
        assert total / trials <= rate_sgd_convex_smooth(1.0, 1.0, sigma, K) * 1.05


class TestPsgd:
    def setup_method(self):
        self.problem = make_convex_lipschitz(1, G=1.0, D=2.0)

    def test_stepsize_and_projection(self):
        D, G, sigma, K = 2.0, 1.0, 0.5, 16
        alg = psgd_convex_lipschitz(self.problem, np.array([1.0]), K, sigma, D, G)
        assert alg.gamma == D / math.sqrt((G**2 + sigma**2) * K)
        out = run_synchronous(alg, GradientOracle(self.problem, sigma, seed=2))
        for w in out.trace:
            assert self.problem.contains(w)

    def test_noiseless_rate_from_boundary(self):
        K = 25
        alg = psgd_convex_lipschitz(self.problem, np.array([1.0]), K, 0.0, 2.0, 1.0)
        out = run_synchronous(alg, GradientOracle(self.problem, 0.0))
        assert self.problem.gap(out.w_hat) <= 2 * 2.0 * 1.0 / math.sqrt(K)

    def test_start_at_minimizer_stays_close(self):
        K = 12
        alg = psgd_convex_lipschitz(self.problem, np.zeros(1), K, 0.0, 2.0, 1.0)
        out = run_synchronous(alg, GradientOracle(self.problem, 0.0))
        for prev, nxt in zip(out.trace, out.trace[1:]):
            assert np.linalg.norm(nxt - prev) <= alg.gamma * 1.0 + 1e-12
        assert self.problem.gap(out.w_hat) <= rate_psgd_lipschitz(2.0, 1.0, 0.0, K)

    def test_requires_bounded_domain(self):
        with pytest.raises(ConfigurationError):
            psgd_convex_lipschitz(QUAD, W1, 4, 0.0, 1.0, 1.0)

    def test_monte_carlo_rate(self):
        K, sigma, trials = 16, 1.0, 200
        total = 0.0
        for s in range(trials):
            alg = psgd_convex_lipschitz(self.problem, np.array([1.0]), K, sigma, 2.0, 1.0, seed=s)
            out = run_synchronous(alg, GradientOracle(self.problem, sigma, seed=7000 + s))
            total += self.problem.gap(out.w_hat)
        assert total / trials <= rate_psgd_lipschitz(2.0, 1.0, sigma, K) * 1.05


class TestAcSa:
    def test_stepsize_formula(self):
        beta, D, sigma, K = 1.0, 1.0, 2.0, 8
        alg = acsa_accelerated(make_quadratic(1, beta), W1, K, sigma, D)
        expected = min(1 / (4 * beta), math.sqrt(3 * D * D / (4 * sigma**2 * K * (K + 1) ** 2)))
        assert alg.gamma == expected
        assert acsa_accelerated(QUAD, W1, 8, 0.0, 1.0).gamma == 0.25

    def test_noiseless_accelerated_rate(self):
        alg = acsa_accelerated(QUAD, W1, 32, 0.0, 1.0)
        out = run_synchronous(alg, GradientOracle(QUAD, 0.0))
        assert QUAD.gap(out.w_hat) <= 4.0 / (32 * 33)

    def test_single_step(self):
        alg = acsa_accelerated(QUAD, W1, 1, 0.0, 1.0)
        out = run_synchronous(alg, GradientOracle(QUAD, 0.0))
        # one step from the initial point with gamma_1 = gamma
        assert out.w_hat == pytest.approx(W1 - 0.25 * QUAD.grad(W1))

    def test_beats_plain_sgd_noiseless(self):
        for K in (8, 16, 32):
            acsa = acsa_accelerated(QUAD, W1, K, 0.0, 1.0)
            gap_acsa = QUAD.gap(run_synchronous(acsa, GradientOracle(QUAD, 0.0)).w_hat)
            sgd = sgd_convex_smooth(QUAD, W1, K, 0.0, 1.0)
            out = run_synchronous(sgd, GradientOracle(QUAD, 0.0))
            gap_sgd = float(np.mean([QUAD.gap(w) for w in out.trace]))
            assert gap_acsa < gap_sgd

    def test_monte_carlo_rate(self):
        K, sigma, trials = 16, 1.0, 200
        total = 0.0
        for s in range(trials):
            alg = acsa_accelerated(QUAD, W1, K, sigma, 1.0, seed=s)
            out = run_synchronous(alg, GradientOracle(QUAD, sigma, seed=9000 + s))
            total += QUAD.gap(out.w_hat)
        assert total / trials <= rate_acsa(1.0, 1.0, sigma, K) * 1.05


class TestVanilla:
    def test_one_step_convergence(self):
        alg = VanillaAsyncSgd(QUAD, np.array([3.0]), eta=1.0)
        alg.receive(QUAD.grad(alg.current_point()), 0)
        assert alg.current_point() == pytest.approx([0.0])

    def test_applies_every_gradient(self):
        alg = VanillaAsyncSgd(QUAD, W1, eta=0.5)
        assert alg.receive(np.array([1.0]), 3) is True
        assert len(alg.iterates) == 2

    def test_eta_validation(self):
        with pytest.raises(ParameterError):
            VanillaAsyncSgd(QUAD, W1, eta=0.0)


def test_trace_csv(tmp_path):
    alg = sgd_convex_smooth(QUAD, W1, K=3, sigma_in=0.0, D=1.0)
    out = run_synchronous(alg, GradientOracle(QUAD, 0.0))
    path = tmp_path / "trace.csv"
    trace_to_csv(out, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,norm,w0"
    assert len(lines) == 4
