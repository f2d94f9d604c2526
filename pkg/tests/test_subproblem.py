"""Linearized model and its convex subproblems.

Reference values marked "oracle" come from ``tools/oracles.py`` (dense polar
grid on the unit disk refined by Nelder-Mead, and multi-start Nelder-Mead for
the regularized step), which evaluates the model directly from ``C`` without
the package's factorization or solvers.
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_instance
from robustnls.errors import DimensionError
from robustnls.perturbation import build_perturbation
from robustnls.problems import make_linear, make_rosenbrock, random_two_layer_net
from robustnls.subproblem import (
    criticality_measure,
    delta_phi,
    iteration_cap,
    linearization_from,
    linearize,
    model_value,
    solve_step,
)
from robustnls.value_function import eval_psi

ORACLE_A = np.array([[2.0, 1.0], [0.0, 1.0], [1.0, -1.0]])
ORACLE_B = np.array([1.0, 0.0, 2.0])
ORACLE_C = np.array([[3.0, 0.0], [0.0, 0.0], [0.0, 4.0]])


def oracle_linear():
    return make_linear(ORACLE_A, ORACLE_B), build_perturbation(ORACLE_C, 0.4)


class TestLinearize:
    def test_composite_at_zero(self, composite):
        prob, model = composite
        lin = linearize(prob, model, np.zeros(1))
        np.testing.assert_array_equal(lin.g, [0.0])
        np.testing.assert_array_equal(lin.a, [-1.0])
        np.testing.assert_array_equal(lin.M, [[1.0]])
        assert lin.psi_x == pytest.approx(eval_psi(prob, model, np.zeros(1)))
        assert lin.n == 1

    def test_model_exact_at_origin(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            prob, model, x = random_instance(rng, deltas=(0.3,))
            lin = linearize(prob, model, x)
            assert model_value(lin, model, np.zeros(prob.n)) == pytest.approx(lin.psi_x, rel=1e-14)

    def test_linear_remainder(self):
        rng = np.random.default_rng(1)
        prob, model, x = random_instance(rng, deltas=(0.3,))
        lin = linearize(prob, model, x)
        A = prob.J(x)
        s = rng.normal(size=prob.n)
        # psi(x + s) - phi(x, s) = ||A s||^2 for F affine
        assert eval_psi(prob, model, x + s) - model_value(lin, model, s) == pytest.approx(
            float(np.sum((A @ s) ** 2)), rel=1e-9)

    def test_second_order_agreement(self):
        prob, x0 = random_two_layer_net(seed=2)
        model = build_perturbation(np.random.default_rng(2).normal(size=(prob.m, 3)), 0.1)
        lin = linearize(prob, model, x0)
        d = np.random.default_rng(3).normal(size=prob.n)
        ratios = []
        for k in range(4, 10):
            s = d * 2.0**-k
            ratios.append(abs(model_value(lin, model, s) - eval_psi(prob, model, x0 + s)) / (s @ s))
        assert max(ratios) < 10 * ratios[0] + 1e-6

    def test_shape_mismatch(self):
        model = build_perturbation(np.eye(2), 0.1)
        with pytest.raises(DimensionError):
            linearization_from(model, np.zeros(3), np.zeros((3, 2)))


class TestDeltaPhi:
    def test_zero_step(self):
        prob, model = oracle_linear()
        lin = linearize(prob, model, np.array([0.3, 0.1]))
        assert delta_phi(lin, model, np.zeros(2)) == 0.0

    def test_zero_residual_nonpositive(self):
        A = np.array([[1.0, 2.0], [3.0, -1.0], [0.0, 1.0]])
        x = np.array([0.5, -0.5])
        prob = make_linear(A, A @ x)
        model = build_perturbation(np.random.default_rng(0).normal(size=(3, 2)), 0.3)
        lin = linearize(prob, model, x)
        rng = np.random.default_rng(1)
        for _ in range(50):
            s = rng.normal(size=2)
            expected = -2 * 0.3 * np.sum(np.abs(model.transformed_c().T @ A @ s))
            assert delta_phi(lin, model, s) == pytest.approx(expected, rel=1e-12, abs=1e-15)
            assert delta_phi(lin, model, s) <= 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 100_000))
    def test_matches_direct_model(self, seed):
        rng = np.random.default_rng(seed)
        prob, model, x = random_instance(rng, deltas=(0.1, 1.0))
        lin = linearize(prob, model, x)
        s = rng.normal(size=prob.n)
        direct = model_value(lin, model, np.zeros(prob.n)) - model_value(lin, model, s)
        assert delta_phi(lin, model, s) == pytest.approx(direct, rel=1e-12, abs=1e-12 * max(1.0, lin.psi_x))

    def test_wrong_shape(self):
        prob, model = oracle_linear()
        lin = linearize(prob, model, np.zeros(2))
        with pytest.raises(DimensionError):
            delta_phi(lin, model, np.zeros(3))


class TestCriticalityMeasure:
    def test_at_minimizer(self, composite):
        prob, model = composite
        crit = criticality_measure(linearize(prob, model, np.array([0.25])), model, 1e-10)
        assert crit.measure <= 1e-8

    def test_perturbed_scalar(self, composite):
        prob, model = composite
        # oracle: dense grid on [-1, 1] gives 0.4, attained at s = -1
        crit = criticality_measure(linearize(prob, model, np.array([0.35])), model, 1e-12)
        assert crit.measure == pytest.approx(0.4, abs=1e-10)
        np.testing.assert_allclose(crit.s_star, [-1.0], atol=1e-8)

    def test_zero_residual(self):
        A = np.array([[1.0, 2.0], [3.0, -1.0]])
        x = np.array([0.1, 0.2])
        prob = make_linear(A, A @ x)
        model = build_perturbation(np.eye(2), 0.5)
        crit = criticality_measure(linearize(prob, model, x), model, 1e-10)
        assert crit.measure == 0.0
        assert np.linalg.norm(crit.s_star) <= 1e-10 or delta_phi(linearize(prob, model, x), model, crit.s_star) <= 0

    @pytest.mark.parametrize(
        "x, expected",
        [
            ([-1.2, 1.0], 221.50597215301417),
            ([0.5, 0.3], 7.07170964968379),
            ([0.9, 0.8], 0.18202723395206197),
        ],
    )
    def test_rosenbrock_disk_oracle(self, x, expected):
        prob = make_rosenbrock(2)
        model = build_perturbation(np.array([[1.0], [0.5]]), 0.3)
        crit = criticality_measure(linearize(prob, model, np.array(x)), model, 1e-12)
        assert crit.measure == pytest.approx(expected, abs=1e-4)
        assert crit.gap_bound <= 1e-12

    @pytest.mark.parametrize("x, expected", [([0.0, 0.0], 14.480000000000004), ([0.7, -0.2], 6.179999999999998)])
    def test_linear_disk_oracle(self, x, expected):
        prob, model = oracle_linear()
        crit = criticality_measure(linearize(prob, model, np.array(x)), model, 1e-12)
        assert crit.measure == pytest.approx(expected, abs=1e-4)

    def test_step_in_ball_and_certified(self):
        rng = np.random.default_rng(21)
        for _ in range(25):
            prob, model, x = random_instance(rng, deltas=(0.1, 1.0))
            lin = linearize(prob, model, x)
            crit = criticality_measure(lin, model, 1e-9)
            assert np.linalg.norm(crit.s_star) <= 1 + 1e-10
            assert 0.0 <= crit.gap_bound <= 1e-9
            assert crit.measure == pytest.approx(max(0.0, delta_phi(lin, model, crit.s_star)))
            # no sampled unit step beats the certified upper bound
            S = rng.normal(size=(200, prob.n))
            S /= np.linalg.norm(S, axis=1, keepdims=True)
            best = max(delta_phi(lin, model, s) for s in S)
            assert best <= crit.measure + crit.gap_bound + 1e-12

    def test_bad_tol(self):
        prob, model = oracle_linear()
        with pytest.raises(ValueError):
            criticality_measure(linearize(prob, model, np.zeros(2)), model, 0.0)


class TestSolveStep:
    def test_scalar_soft_threshold(self, composite):
        prob, model = composite
        lin = linearize(prob, model, np.zeros(1))
        step = solve_step(lin, model, 1.0, 1e-12)
        # min |s - 1| + s^2  ->  s = 0.5
        np.testing.assert_allclose(step.s, [0.5], atol=1e-10)
        assert step.model_value == pytest.approx(lin.psi_x - 1.0 + 0.5 + 0.25, abs=1e-10)

    def test_flat_model(self):
        model = build_perturbation(np.eye(2), 0.3)
        lin = linearization_from(model, np.array([1.0, -1.0]), np.zeros((2, 3)))
        step = solve_step(lin, model, 2.0, 1e-10)
        np.testing.assert_array_equal(step.s, np.zeros(3))

    @pytest.mark.parametrize(
        "x, sigma, expected",
        [
            ([0.0, 0.0], 0.5, -4.000000000000001),
            ([0.0, 0.0], 2.0, -1.0),
            ([0.7, -0.2], 0.5, -0.5250000000000004),
            ([0.7, -0.2], 2.0, 0.5699999999999998),
        ],
    )
    def test_oracle_values(self, x, sigma, expected):
        prob, model = oracle_linear()
        step = solve_step(linearize(prob, model, np.array(x)), model, sigma, 1e-12)
        assert step.model_value == pytest.approx(expected, abs=1e-8)

    def test_certificate(self):
        rng = np.random.default_rng(31)
        for _ in range(25):
            prob, model, x = random_instance(rng, deltas=(0.1, 1.0))
            lin = linearize(prob, model, x)
            sigma = float(rng.uniform(0.1, 10.0))
            step = solve_step(lin, model, sigma, 1e-9)
            assert 0.0 <= step.gap_bound <= 1e-9
            # the gap bounds suboptimality against random competitors
            for _ in range(50):
                s = step.s + 0.1 * rng.normal(size=prob.n)
                assert model_value(lin, model, s) + sigma * s @ s >= step.model_value - step.gap_bound - 1e-12

    @pytest.mark.parametrize("sigma, tol", [(0.0, 1e-8), (1.0, 0.0)])
    def test_bad_args(self, sigma, tol):
        prob, model = oracle_linear()
        with pytest.raises(ValueError):
            solve_step(linearize(prob, model, np.zeros(2)), model, sigma, tol)


def test_iteration_cap():
    assert iteration_cap(3, 2, 1e-6) == 50 * 5 * 6
    assert iteration_cap(1, 1, 1.0) == 100
