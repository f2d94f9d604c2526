import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_instance
from robustnls.errors import DimensionError, NonFiniteOutput, TooManyVertices
from robustnls.perturbation import build_perturbation, to_original_coords
from robustnls.problems import make_linear
from robustnls.value_function import (
    ResidualProblem,
    directional_derivative_phi,
    eval_f,
    eval_phi,
    eval_psi,
    gradient_phi,
    inner_argmax,
    inner_max_bruteforce,
    l1_term,
)


def identity_problem(n=2):
    return ResidualProblem(n, n, lambda x: x, lambda x: np.eye(n), name="identity")


class TestResidualProblem:
    def test_counters(self):
        prob = identity_problem()
        assert prob.counters == {"F": 0, "J": 0}
        prob.F(np.zeros(2))
        prob.F(np.zeros(2))
        prob.J(np.zeros(2))
        assert (prob.n_F, prob.n_J) == (2, 1)
        prob.reset_counters()
        assert prob.counters == {"F": 0, "J": 0}

    def test_nonfinite_output(self):
        prob = ResidualProblem(1, 1, lambda x: np.array([np.inf]), lambda x: np.eye(1))
        with pytest.raises(NonFiniteOutput) as info:
            prob.F(np.zeros(1))
        assert info.value.x is not None

    def test_shape_checks(self):
        prob = ResidualProblem(2, 3, lambda x: np.zeros(2), lambda x: np.zeros((3, 2)))
        with pytest.raises(DimensionError):
            prob.F(np.zeros(2))
        with pytest.raises(DimensionError):
            prob.J(np.zeros(3))

    def test_bad_dims(self):
        with pytest.raises(DimensionError):
            ResidualProblem(0, 1, None, None)


class TestEvalF:
    def test_origin(self):
        model = build_perturbation(np.eye(2), 1.0)
        assert eval_f(identity_problem(), model, np.zeros(2), np.zeros(2)) == 0.0

    def test_corner(self):
        model = build_perturbation(np.eye(2), 1.0)
        assert eval_f(identity_problem(), model, np.zeros(2), np.ones(2)) == pytest.approx(2.0)

    def test_original_coordinates(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            prob, model, x = random_instance(rng)
            y_hat = rng.uniform(-model.delta, model.delta, size=model.r)
            y = to_original_coords(model, y_hat)
            direct = prob.F(x) - model.c_raw @ y
            assert eval_f(prob, model, x, y_hat) == pytest.approx(float(direct @ direct), rel=1e-12, abs=1e-14)


class TestEvalPhi:
    def test_identity_example(self):
        prob = make_linear(np.eye(2), np.zeros(2))
        model = build_perturbation(np.eye(2), 1.0)
        assert eval_phi(prob, model, np.zeros(2)) == pytest.approx(2.0)

    def test_zero_delta(self):
        rng = np.random.default_rng(0)
        prob, _, x = random_instance(rng)
        model = build_perturbation(rng.normal(size=(prob.m, 1)), 0.0)
        F = prob.F(x)
        assert eval_phi(prob, model, x) == pytest.approx(float(F @ F), rel=1e-14)

    def test_matches_vertex_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            prob, model, x = random_instance(rng)
            val, _ = inner_max_bruteforce(prob, model, x)
            assert abs(eval_phi(prob, model, x) - val) <= 1e-9 * max(1.0, val)

    def test_psi_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            prob, model, x = random_instance(rng)
            assert eval_psi(prob, model, x) + model.c_frob_sq * model.delta**2 == pytest.approx(
                eval_phi(prob, model, x), rel=1e-12)

    def test_psi_composite(self, composite):
        prob, model = composite
        # 2 x^2 + 2 + |x - 1| at x = 0.25
        assert eval_psi(prob, model, np.array([0.25])) == pytest.approx(2.875, rel=1e-15)
        assert eval_psi(prob, model, np.array([3.0])) == pytest.approx(2 * 9 + 2 + 2, rel=1e-15)

    def test_l1_term_rotated(self):
        model = build_perturbation(np.array([[3.0, 0.0], [0.0, 0.0], [0.0, 4.0]]), 1.0)
        F = np.array([1.0, 5.0, -2.0])
        assert l1_term(model, F) == pytest.approx(3.0 + 8.0)

    def test_dimension_mismatch(self):
        model = build_perturbation(np.eye(3), 1.0)
        with pytest.raises(DimensionError):
            eval_phi(identity_problem(2), model, np.zeros(2))


class TestInnerArgmax:
    def test_sign_rule(self):
        model = build_perturbation(np.eye(2), 0.5)
        inner = inner_argmax(model, np.array([1.0, -2.0]))
        np.testing.assert_array_equal(inner.y_hat, [-0.5, 0.5])
        np.testing.assert_array_equal(inner.tie_mask, [False, False])
        assert not inner.all_ties

    def test_zero_residual_all_ties(self):
        model = build_perturbation(np.random.default_rng(0).normal(size=(4, 3)), 0.2)
        inner = inner_argmax(model, np.zeros(4))
        np.testing.assert_array_equal(inner.y_hat, [0.2, 0.2, 0.2])
        assert inner.all_ties
        assert inner.value == pytest.approx(model.c_frob_sq * 0.04)

    def test_relative_tie_threshold(self):
        model = build_perturbation(np.eye(2), 1.0)
        inner = inner_argmax(model, np.array([1e6, 1e-7]))
        np.testing.assert_array_equal(inner.tie_mask, [False, True])

    def test_vertex_dominance(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            prob, model, x = random_instance(rng, r_max=6, deltas=(0.1, 1.0))
            F = prob.F(x)
            inner = inner_argmax(model, F)
            assert np.all(np.abs(inner.y_hat) == model.delta)
            f_hat = eval_f(prob, model, x, inner.y_hat)
            for k in range(2**model.r):
                y = np.where((k >> np.arange(model.r)) & 1, model.delta, -model.delta)
                assert eval_f(prob, model, x, y) <= f_hat * (1 + 1e-12) + 1e-12
            assert inner.value == pytest.approx(eval_phi(prob, model, x), rel=1e-10)

    def test_shape(self):
        with pytest.raises(DimensionError):
            inner_argmax(build_perturbation(np.eye(2), 1.0), np.zeros(3))


class TestBruteforce:
    def test_scalar(self):
        prob = ResidualProblem(1, 1, lambda x: np.array([3.0]), lambda x: np.zeros((1, 1)))
        val, y = inner_max_bruteforce(prob, build_perturbation(np.eye(1), 2.0), np.zeros(1))
        assert val == 25.0
        np.testing.assert_array_equal(y, [-2.0])

    def test_zero_delta(self):
        rng = np.random.default_rng(4)
        prob, _, x = random_instance(rng)
        model = build_perturbation(np.eye(prob.m, 1), 0.0)
        F = prob.F(x)
        assert inner_max_bruteforce(prob, model, x)[0] == pytest.approx(float(F @ F))

    def test_blocks_agree(self):
        rng = np.random.default_rng(6)
        prob, model, x = random_instance(rng, m_max=10, r_max=10)
        v1, y1 = inner_max_bruteforce(prob, model, x, block=7)
        v2, y2 = inner_max_bruteforce(prob, model, x)
        assert v1 == v2
        np.testing.assert_array_equal(y1, y2)

    def test_too_many_vertices(self):
        prob = identity_problem(21)
        with pytest.raises(TooManyVertices):
            inner_max_bruteforce(prob, build_perturbation(np.eye(21), 1.0), np.zeros(21))


class TestDirectionalDerivative:
    def test_zero_direction(self):
        rng = np.random.default_rng(1)
        prob, model, x = random_instance(rng, deltas=(0.5,))
        assert directional_derivative_phi(prob, model, x, np.zeros(prob.n)) == 0.0

    def test_central_differences(self):
        rng = np.random.default_rng(12)
        t = 1e-6
        for _ in range(40):
            prob, model, x = random_instance(rng, deltas=(0.1, 1.0))
            d = rng.normal(size=prob.n)
            d /= np.linalg.norm(d)
            fd = (eval_phi(prob, model, x + t * d) - eval_phi(prob, model, x - t * d)) / (2 * t)
            assert directional_derivative_phi(prob, model, x, d) == pytest.approx(fd, abs=1e-4)

    def test_one_sided_at_tie(self):
        # linear F with a tie at x: phi is piecewise quadratic along d, so the
        # one-sided quotient is affine in t and Richardson extrapolation is exact
        A = np.array([[1.0, 2.0], [0.5, -1.0], [2.0, 0.0]])
        x = np.array([1.0, 0.5])
        b = A @ x
        prob = make_linear(A, b)
        model = build_perturbation(np.array([[1.0], [0.3], [-0.2]]), 0.4)
        t = 1e-4
        rng = np.random.default_rng(0)
        phi0 = eval_phi(prob, model, x)
        for _ in range(10):
            d = rng.normal(size=2)
            q1 = (eval_phi(prob, model, x + t * d) - phi0) / t
            q2 = (eval_phi(prob, model, x + 0.5 * t * d) - phi0) / (0.5 * t)
            one_sided = 2.0 * q2 - q1
            assert directional_derivative_phi(prob, model, x, d) == pytest.approx(one_sided, abs=1e-6)

    def test_gradient_consistency(self):
        rng = np.random.default_rng(13)
        prob, model, x = random_instance(rng, deltas=(1.0,))
        g = gradient_phi(prob, model, x)
        for _ in range(5):
            d = rng.normal(size=prob.n)
            assert directional_derivative_phi(prob, model, x, d) == pytest.approx(g @ d, rel=1e-10, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 3.0))
    def test_positively_homogeneous(self, seed, scale):
        prob, model, x = random_instance(np.random.default_rng(seed), deltas=(0.5,))
        d = np.random.default_rng(seed + 1).normal(size=prob.n)
        base = directional_derivative_phi(prob, model, x, d)
        assert directional_derivative_phi(prob, model, x, scale * d) == pytest.approx(scale * base, rel=1e-10, abs=1e-12)
