import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from robustnls.errors import DimensionError, NonFiniteInput, RankDeficient
from robustnls.perturbation import build_perturbation, rank_tolerance, to_original_coords


class TestBuildPerturbation:
    def test_identity(self):
        model = build_perturbation(np.eye(2), 1.0)
        np.testing.assert_array_equal(model.q, np.eye(2))
        np.testing.assert_array_equal(model.r_diag, [1.0, 1.0])
        np.testing.assert_array_equal(model.v, np.eye(2))
        assert model.c_frob_sq == 2.0
        assert (model.m, model.r) == (2, 2)

    def test_diagonal_columns_sorted_descending(self):
        C = np.array([[3.0, 0.0], [0.0, 0.0], [0.0, 4.0]])
        model = build_perturbation(C, 0.5)
        np.testing.assert_allclose(model.r_diag, [4.0, 3.0], rtol=0, atol=1e-14)
        assert model.c_frob_sq == pytest.approx(25.0, rel=1e-14)
        # signs are fixed so the largest entry of each left vector is positive
        np.testing.assert_allclose(model.q, [[0.0, 1.0], [0.0, 0.0], [1.0, 0.0]], atol=1e-15)

    def test_random_reconstruction(self):
        rng = np.random.default_rng(3)
        C = rng.uniform(-1.0, 1.0, size=(6, 3))
        model = build_perturbation(C, 0.2)
        recon = model.q @ np.diag(model.r_diag) @ model.v.T
        assert np.linalg.norm(recon - C) <= 1e-10 * np.linalg.norm(C)
        assert model.c_frob_sq == pytest.approx(float(np.sum(C * C)), rel=1e-12)
        np.testing.assert_allclose(model.q.T @ model.q, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(model.transformed_c(), model.q * model.r_diag)

    def test_vector_is_a_column(self):
        model = build_perturbation(np.array([1.0, 2.0, 2.0]), 1.0)
        assert (model.m, model.r) == (3, 1)
        assert model.r_diag[0] == pytest.approx(3.0)

    def test_arrays_are_read_only(self):
        model = build_perturbation(np.eye(2), 1.0)
        with pytest.raises(ValueError):
            model.q[0, 0] = 5.0

    def test_deterministic(self):
        C = np.random.default_rng(0).normal(size=(5, 3))
        a, b = build_perturbation(C, 0.1), build_perturbation(C.copy(), 0.1)
        for name in ("q", "r_diag", "v"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    @pytest.mark.parametrize(
        "C, exc",
        [
            (np.ones((2, 3)), DimensionError),
            (np.ones((2, 0)), DimensionError),
            (np.ones((2, 2, 2)), DimensionError),
            (np.array([[1.0, np.nan], [0.0, 1.0]]), NonFiniteInput),
            (np.array([[1.0, 2.0], [2.0, 4.0]]), RankDeficient),
            (np.zeros((3, 1)), RankDeficient),
        ],
    )
    def test_rejects(self, C, exc):
        with pytest.raises(exc):
            build_perturbation(C, 1.0)

    @pytest.mark.parametrize("delta, exc", [(-0.1, ValueError), (np.inf, NonFiniteInput), (np.nan, NonFiniteInput)])
    def test_rejects_delta(self, delta, exc):
        with pytest.raises(exc):
            build_perturbation(np.eye(2), delta)

    def test_rank_tolerance(self):
        assert rank_tolerance((6, 3), 2.0) == 6 * np.finfo(float).eps * 2.0

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)),
                  elements=st.floats(-10, 10, allow_nan=False)))
    def test_factor_properties(self, C):
        if C.shape[0] < C.shape[1]:
            C = C.T
        try:
            model = build_perturbation(C, 0.3)
        except RankDeficient:
            return
        assert np.all(model.r_diag > 0)
        assert np.all(np.diff(model.r_diag) <= 0)
        np.testing.assert_allclose(model.q.T @ model.q, np.eye(model.r), atol=1e-10)
        recon = model.q @ np.diag(model.r_diag) @ model.v.T
        assert np.linalg.norm(recon - C) <= 1e-10 * max(1.0, np.linalg.norm(C))


class TestToOriginalCoords:
    def test_identity_rotation(self):
        model = build_perturbation(np.eye(2), 0.3)
        np.testing.assert_array_equal(to_original_coords(model, np.array([0.3, -0.3])), [0.3, -0.3])

    def test_rotation_45(self):
        c, s = np.cos(np.pi / 4), np.sin(np.pi / 4)
        Rot = np.array([[c, -s], [s, c]])
        model = build_perturbation(np.diag([2.0, 1.0]) @ Rot.T, 0.5)
        y = to_original_coords(model, np.array([0.5, 0.5]))
        assert np.max(np.abs(y)) == pytest.approx(np.sqrt(2.0) * 0.5, rel=1e-12)
        # y = V y_hat keeps C y = Q R y_hat
        np.testing.assert_allclose(model.c_raw @ y, model.transformed_c() @ np.array([0.5, 0.5]), atol=1e-14)

    def test_zero(self):
        model = build_perturbation(np.random.default_rng(1).normal(size=(4, 3)), 0.7)
        np.testing.assert_array_equal(to_original_coords(model, np.zeros(3)), np.zeros(3))

    def test_outside_box(self):
        model = build_perturbation(np.eye(2), 0.3)
        with pytest.raises(ValueError):
            to_original_coords(model, np.array([0.31, 0.0]))

    def test_wrong_shape(self):
        model = build_perturbation(np.eye(2), 0.3)
        with pytest.raises(DimensionError):
            to_original_coords(model, np.zeros(3))
