import numpy as np
import pytest

from robustnls.problems import make_composite_1d, make_linear
from robustnls.perturbation import build_perturbation


def random_instance(rng, n_max=4, m_max=10, r_max=10, deltas=(0.0, 0.1, 1.0)):
    """Random linear residual ``A x - b`` with a full-rank ``C`` and a point ``x``."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    r = int(rng.integers(1, min(m, r_max) + 1))
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    C = rng.uniform(-1.0, 1.0, size=(m, r)) + np.eye(m, r)
    delta = float(rng.choice(deltas))
    return make_linear(A, b), build_perturbation(C, delta), rng.normal(size=n)


@pytest.fixture
def composite():
    """``F(x) = (x - 1, x + 1)`` with ``C = (1, 0)^T`` and ``delta = 0.5``."""
    return make_composite_1d(), build_perturbation(np.array([[1.0], [0.0]]), 0.5)
