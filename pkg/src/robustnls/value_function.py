"""Inner maximization over the perturbation box in closed form.

For ``f(x, y) = ||F(x) - C y||^2`` with ``||y_hat||_inf <= delta`` the inner
maximum is attained at a sign vertex and equals

    phi(x) = ||F(x)||^2 + 2 delta ||C^T F(x)||_1 + ||C||_F^2 delta^2.

``psi`` is ``phi`` without the constant term; it is the objective the outer
solver minimizes.  ``inner_max_bruteforce`` enumerates all ``2**r`` vertices
and is kept as an independent check of the closed form.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NonFiniteOutput, TooManyVertices
from .perturbation import PerturbationModel

__all__ = [
    "ResidualProblem",
    "InnerMaximizer",
    "eval_f",
    "eval_phi",
    "eval_psi",
    "inner_argmax",
    "inner_max_bruteforce",
    "directional_derivative_phi",
    "gradient_phi",
    "tie_mask",
    "l1_term",
    "MAX_BRUTEFORCE_DIM",
]

MAX_BRUTEFORCE_DIM = 20
TIE_RTOL = 1e-12


class ResidualProblem:
    """Residual map ``F: R^n -> R^m`` with its Jacobian and evaluation counters.

    Parameters
    ----------
    n, m : int
        Decision and residual dimensions.
    fun : callable
        ``fun(x) -> (m,)`` array.
    jac : callable
        ``jac(x) -> (m, n)`` array.
    name : str, optional
        Label used in reports.
    """

    def __init__(self, n, m, fun, jac, name="problem"):
        if n < 1 or m < 1:
            raise DimensionError(f"n and m must be positive, got n={n}, m={m}")
        self.n = int(n)
        self.m = int(m)
        self._fun = fun
        self._jac = jac
        self.name = name
        self._lock = threading.Lock()
        self.n_F = 0
        self.n_J = 0

    def __repr__(self):
        return f"ResidualProblem({self.name!r}, n={self.n}, m={self.m})"

    @property
    def counters(self):
        return {"F": self.n_F, "J": self.n_J}

    def reset_counters(self):
        with self._lock:
            self.n_F = 0
            self.n_J = 0

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionError(f"x must have shape ({self.n},), got {x.shape}")
        return x

    def F(self, x) -> np.ndarray:
        x = self._check_x(x)
        with self._lock:
            self.n_F += 1
        out = np.asarray(self._fun(x), dtype=float).reshape(-1)
        if out.shape != (self.m,):
            raise DimensionError(f"F(x) must have shape ({self.m},), got {out.shape}")
        if not np.all(np.isfinite(out)):
            raise NonFiniteOutput(f"F(x) is not finite at x={x!r}", x=x)
        return out

    def J(self, x) -> np.ndarray:
        x = self._check_x(x)
        with self._lock:
            self.n_J += 1
        out = np.asarray(self._jac(x), dtype=float)
        if out.shape != (self.m, self.n):
            raise DimensionError(f"F'(x) must have shape ({self.m}, {self.n}), got {out.shape}")
        if not np.all(np.isfinite(out)):
            raise NonFiniteOutput(f"F'(x) is not finite at x={x!r}", x=x)
        return out


@dataclass(frozen=True)
class InnerMaximizer:
    """Sign-rule maximizer of ``f(x, .)`` over the box (transformed coordinates)."""

    y_hat: np.ndarray
    tie_mask: np.ndarray
    value: float

    @property
    def all_ties(self) -> bool:
        return bool(np.all(self.tie_mask))


def _check_dims(problem, model):
    if problem.m != model.m:
        raise DimensionError(f"F has m={problem.m} rows but C has m={model.m}")


def l1_term(model: PerturbationModel, F_x) -> float:
    """``||C^T F_x||_1`` evaluated as ``sum(R_jj |(Q^T F_x)_j|)``."""
    return float(np.dot(model.r_diag, np.abs(model.q.T @ F_x)))


def _phi_parts(model, F_x):
    sq = float(np.dot(F_x, F_x))
    psi = sq + 2.0 * model.delta * l1_term(model, F_x)
    return psi, psi + model.c_frob_sq * model.delta**2


def eval_f(problem: ResidualProblem, model: PerturbationModel, x, y) -> float:
    """``||F(x) - Q diag(R) y||^2`` with ``y`` in transformed coordinates."""
    _check_dims(problem, model)
    y = np.asarray(y, dtype=float)
    if y.shape != (model.r,):
        raise DimensionError(f"y must have shape ({model.r},), got {y.shape}")
    res = problem.F(x) - model.q @ (model.r_diag * y)
    return float(np.dot(res, res))


def eval_phi(problem: ResidualProblem, model: PerturbationModel, x) -> float:
    """Closed-form inner maximum ``max_y f(x, y)``."""
    _check_dims(problem, model)
    return _phi_parts(model, problem.F(x))[1]


def eval_psi(problem: ResidualProblem, model: PerturbationModel, x) -> float:
    """``||F(x)||^2 + 2 delta ||C^T F(x)||_1``."""
    _check_dims(problem, model)
    return _phi_parts(model, problem.F(x))[0]


def tie_mask(model: PerturbationModel, F_x) -> np.ndarray:
    xi = model.q.T @ F_x
    scale = max(1.0, float(np.max(np.abs(xi)))) if xi.size else 1.0
    return np.abs(xi) <= TIE_RTOL * scale


def inner_argmax(model: PerturbationModel, F_x) -> InnerMaximizer:
    """Explicit maximizer: ``y_hat_j = -delta * sign((Q^T F_x)_j)``, ties to ``+delta``."""
    F_x = np.asarray(F_x, dtype=float)
    if F_x.shape != (model.m,):
        raise DimensionError(f"F_x must have shape ({model.m},), got {F_x.shape}")
    xi = model.q.T @ F_x
    ties = tie_mask(model, F_x)
    y_hat = np.where(xi > 0, -model.delta, model.delta)
    y_hat[ties] = model.delta
    return InnerMaximizer(y_hat=y_hat, tie_mask=ties, value=_phi_parts(model, F_x)[1])


def _vertex_block(r, start, stop, delta):
    idx = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (idx >> np.arange(r, dtype=np.int64)) & 1
    return np.where(bits == 1, delta, -delta)


def inner_max_bruteforce(problem: ResidualProblem, model: PerturbationModel, x, block=4096):
    """Maximize ``f(x, .)`` by enumerating every vertex of the box.

    Vertex ``k`` has ``y_j = +delta`` when bit ``j`` of ``k`` is set and
    ``-delta`` otherwise.  Among equal maxima the lowest index wins.

    Returns
    -------
    value : float
    argmax : (r,) ndarray
    """
    _check_dims(problem, model)
    r = model.r
    if r > MAX_BRUTEFORCE_DIM:
        raise TooManyVertices(f"r={r} exceeds the enumeration limit {MAX_BRUTEFORCE_DIM}")
    F_x = problem.F(x)
    c_hat = model.transformed_c()
    best_val, best_y = -np.inf, None
    for start in range(0, 2**r, block):
        ys = _vertex_block(r, start, min(2**r, start + block), model.delta)
        res = F_x[None, :] - ys @ c_hat.T
        vals = np.einsum("ij,ij->i", res, res)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_y = float(vals[k]), ys[k].copy()
    return best_val, best_y


def _direction_terms(problem, model, x, d):
    _check_dims(problem, model)
    d = np.asarray(d, dtype=float)
    if d.shape != (problem.n,):
        raise DimensionError(f"d must have shape ({problem.n},), got {d.shape}")
    F_x = problem.F(x)
    J_x = problem.J(x)
    return F_x, J_x, d


def directional_derivative_phi(problem: ResidualProblem, model: PerturbationModel, x, d) -> float:
    """One-sided derivative ``phi'(x; d)``.

    Equals the maximum over inner maximizers ``y*`` of
    ``2 d^T F'(x)^T (F(x) - C y*)``; at tied coordinates the maximizing sign
    is picked per coordinate, giving ``2 delta R_jj |(Q^T F'(x) d)_j|``.
    """
    F_x, J_x, d = _direction_terms(problem, model, x, d)
    Jd = J_x @ d
    xi = model.q.T @ F_x
    eta = model.q.T @ Jd
    ties = tie_mask(model, F_x)
    l1_rate = np.where(ties, np.abs(eta), np.sign(xi) * eta)
    return float(2.0 * np.dot(F_x, Jd) + 2.0 * model.delta * np.dot(model.r_diag, l1_rate))


def gradient_phi(problem: ResidualProblem, model: PerturbationModel, x) -> np.ndarray:
    """``2 F'(x)^T (F(x) - C y*(x))``; the gradient wherever no coordinate ties."""
    _check_dims(problem, model)
    F_x = problem.F(x)
    J_x = problem.J(x)
    y_star = inner_argmax(model, F_x).y_hat
    return 2.0 * J_x.T @ (F_x - model.q @ (model.r_diag * y_star))
