"""Linearized composite model and its two convex subproblems.

At ``x`` the model of ``psi(x + s)`` is

    phi(x, s) = ||F||^2 + g^T s + 2 delta ||a + M s||_1,

with ``g = 2 J^T F``, ``a = C^T F`` and ``M = C^T J`` (both in rotated
coordinates).  The outer loop needs

* the criticality measure ``max_{||s|| <= 1} phi(x, 0) - phi(x, s)``;
* the regularized step ``argmin_s phi(x, s) + sigma ||s||^2``.

Both are solved in the saddle form ``min_s max_{|w_i| <= 2 delta}
g^T s + w^T (a + M s)`` by the primal-dual kernel, followed by an active-set
polish.  Every returned point carries a duality gap computed from an explicit
dual-feasible ``w``, so reported accuracy never depends on the heuristics.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import DimensionError, MaxIterations
from .perturbation import PerturbationModel
from .value_function import ResidualProblem

__all__ = [
    "LinearizationData",
    "SubproblemSolution",
    "CriticalityResult",
    "linearize",
    "linearization_from",
    "model_value",
    "delta_phi",
    "criticality_measure",
    "solve_step",
    "iteration_cap",
]


@dataclass(frozen=True)
class LinearizationData:
    F_x: np.ndarray
    J_x: np.ndarray
    g: np.ndarray
    a: np.ndarray
    M: np.ndarray
    psi_x: float

    @property
    def n(self):
        return self.J_x.shape[1]


@dataclass(frozen=True)
class SubproblemSolution:
    s: np.ndarray
    model_value: float
    gap_bound: float
    iterations: int


class CriticalityResult(NamedTuple):
    measure: float
    s_star: np.ndarray
    gap_bound: float
    iterations: int


def linearization_from(model: PerturbationModel, F_x, J_x) -> LinearizationData:
    """Build the model data from already evaluated ``F(x)`` and ``F'(x)``."""
    F_x = np.asarray(F_x, dtype=float)
    J_x = np.asarray(J_x, dtype=float)
    if J_x.ndim != 2 or J_x.shape[0] != F_x.shape[0] or F_x.shape[0] != model.m:
        raise DimensionError(
            f"inconsistent shapes F {F_x.shape}, J {J_x.shape} for C with m={model.m}"
        )
    a = model.r_diag * (model.q.T @ F_x)
    M = model.r_diag[:, None] * (model.q.T @ J_x)
    psi = float(F_x @ F_x) + 2.0 * model.delta * float(np.sum(np.abs(a)))
    return LinearizationData(F_x=F_x, J_x=J_x, g=2.0 * (J_x.T @ F_x), a=a, M=M, psi_x=psi)


def linearize(problem: ResidualProblem, model: PerturbationModel, x, F_x=None) -> LinearizationData:
    """Evaluate ``F`` and ``F'`` at ``x`` and build the model.

    A previously evaluated ``F_x`` may be passed to skip the residual call.
    """
    if F_x is None:
        F_x = problem.F(x)
    return linearization_from(model, F_x, problem.J(x))


def model_value(lin: LinearizationData, model: PerturbationModel, s) -> float:
    s = np.asarray(s, dtype=float)
    return float(
        lin.F_x @ lin.F_x + lin.g @ s + 2.0 * model.delta * np.sum(np.abs(lin.a + lin.M @ s))
    )


def delta_phi(lin: LinearizationData, model: PerturbationModel, s) -> float:
    """Model decrease ``phi(x, 0) - phi(x, s)``."""
    s = np.asarray(s, dtype=float)
    if s.shape != (lin.n,):
        raise DimensionError(f"s must have shape ({lin.n},), got {s.shape}")
    l1_0 = np.sum(np.abs(lin.a))
    l1_s = np.sum(np.abs(lin.a + lin.M @ s))
    return float(-(lin.g @ s) + 2.0 * model.delta * (l1_0 - l1_s))


def iteration_cap(n, r, tol):
    return int(50 * (n + r) * max(1.0, math.log10(1.0 / tol)))


# --- convex solver -----------------------------------------------------------

def _primal(g, a, M, w_max, reg, s):
    return float(g @ s + w_max * np.sum(np.abs(a + M @ s)) + reg * (s @ s))


def _dual(g, a, M, w_max, reg, ball, w):
    u = g + M.T @ w
    if ball:
        return float(a @ w) - float(np.sqrt(u @ u))
    return float(a @ w) - float(u @ u) / (4.0 * reg)


def _null_space(A, scale):
    """Min-norm solver data and null-space basis of ``A`` via SVD."""
    u, sv, vt = np.linalg.svd(A, full_matrices=True)
    tol = max(A.shape) * np.finfo(float).eps * max(scale, sv[0] if sv.size else 0.0)
    k = int(np.sum(sv > tol))
    return u[:, :k], sv[:k], vt[:k].T, vt[k:].T


def _polish(g, a, M, w_max, reg, ball, kink, signs):
    """Solve the model exactly on a guessed kink set and sign pattern.

    ``kink`` marks rows forced to ``(a + M s)_i = 0``; the remaining rows use
    ``signs``.  Returns ``(s, w)`` with ``w`` dual-feasible.
    """
    n = g.shape[0]
    free = ~kink
    h = g + w_max * (M[free].T @ signs[free])
    if np.any(kink):
        MZ = M[kink]
        uk, sk, vk, N = _null_space(MZ, 1.0)
        s0 = -(vk @ ((uk.T @ a[kink]) / sk)) if sk.size else np.zeros(n)
    else:
        MZ = None
        s0 = np.zeros(n)
        N = np.eye(n)
    p = N.T @ h
    if ball:
        n0 = float(np.sqrt(s0 @ s0))
        if n0 >= 1.0:
            s = s0 / n0
        else:
            pn = float(np.sqrt(p @ p))
            s = s0 - math.sqrt(1.0 - n0 * n0) * (N @ p) / pn if pn > 0 else s0
    else:
        s = s0 - (N @ p) / (2.0 * reg)

    w = np.zeros_like(a)
    w[free] = w_max * signs[free]
    if MZ is not None:
        if ball:
            interior = float(s @ s) < 1.0 - 1e-12
            lhs = MZ.T if interior else np.column_stack([MZ.T, s])
            sol = np.linalg.lstsq(lhs, -h, rcond=None)[0]
            wz = sol[: MZ.shape[0]]
        else:
            wz = np.linalg.lstsq(MZ.T, -(h + 2.0 * reg * s), rcond=None)[0]
        w[kink] = np.clip(wz, -w_max, w_max)
    return s, w


# upper bound on the number of extra kink sets tried by exhaustive search
_EXHAUSTIVE_BUDGET = 1024


def _patterns(a, M, w_max, s, w):
    """Candidate kink sets: nested prefixes of rows ordered by closeness to a kink.

    Rows are ranked once by the primal residual ``|a + M s|`` (relative to the
    row norm) and once by dual interiority ``|w|``; every prefix of either
    ranking is a candidate.  A generic kink set has at most ``n`` rows, so
    when the number of such subsets is small they are all tried afterwards,
    smallest first: a kink set need not be a prefix of either ranking.
    """
    z = a + M @ s
    sz = np.where(z != 0, np.sign(z), np.sign(w))
    sz[sz == 0] = 1.0
    rn = np.sqrt(np.sum(M * M, axis=1))
    rel = np.abs(z) / np.maximum(rn, np.finfo(float).tiny)
    r = a.shape[0]
    seen = set()
    for order in (np.argsort(rel, kind="stable"), np.argsort(np.abs(w), kind="stable")):
        for k in range(r + 1):
            kink = np.zeros(r, dtype=bool)
            kink[order[:k]] = True
            key = kink.tobytes()
            if key in seen:
                continue
            seen.add(key)
            yield kink, sz
    # degenerate data (a in the range of M) can kink more than n rows
    kmax = r if r <= 6 else min(M.shape[1], r)
    if sum(math.comb(r, k) for k in range(kmax + 1)) <= _EXHAUSTIVE_BUDGET:
        for k in range(kmax + 1):
            for rows in itertools.combinations(range(r), k):
                kink = np.zeros(r, dtype=bool)
                kink[list(rows)] = True
                if kink.tobytes() not in seen:
                    yield kink, sz


def _solve(lin, model, reg, ball, tol, backend=None):
    g, a, M = lin.g, lin.a, lin.M
    n, r = g.shape[0], a.shape[0]
    w_max = 2.0 * model.delta
    kernel = _kernels.pdhg if backend is None else _kernels.get_pdhg(backend)

    best = None

    def consider(s, w):
        nonlocal best
        p = _primal(g, a, M, w_max, reg, s)
        d = _dual(g, a, M, w_max, reg, ball, w)
        if best is None or p - d < best[2] - best[3]:
            best = (s.copy(), w.copy(), p, d)
        return p - d

    def polish(kink, sg):
        # the free-row signs come from an inexact iterate; re-read them at the
        # polished point until they stop changing
        for _ in range(3):
            s_p, w_p = _polish(g, a, M, w_max, reg, ball, kink, sg)
            gap = consider(s_p, w_p)
            if gap <= tol:
                return gap
            z = a + M @ s_p
            new = np.where(z != 0, np.sign(z), sg)
            if np.array_equal(new[~kink], sg[~kink]):
                return gap
            sg = new
        return gap

    s = np.zeros(n)
    w = w_max * np.sign(a)
    consider(s, w)
    for kink, sg in _patterns(a, M, w_max, s, w):
        if polish(kink, sg) <= tol:
            return best, 0

    L = float(np.linalg.norm(M, 2)) if M.size else 0.0
    done = 0
    # L == 0 or w_max == 0 makes the problem separable and the polish exact
    cap = iteration_cap(n, r, tol) if L > 0.0 and w_max > 0.0 else 0
    if cap:
        if ball:
            ps = 1.0
        else:
            ps = float(np.sqrt(best[0] @ best[0]))
            if ps == 0.0:
                ps = (float(np.sqrt(g @ g)) + w_max * L * math.sqrt(r)) / (2.0 * reg)
            ps = max(ps, 1e-12)
        omega = w_max / ps
        tau = 0.95 / (L * omega)
        sig = 0.95 * omega / L
        chunk = max(100, cap // 20)
        s = best[0].copy()
        w = best[1].copy()
        Mc = np.ascontiguousarray(M)
    while done < cap:
        it, _, _ = kernel(g, a, Mc, w_max, reg, bool(ball), tau, sig,
                          s, w, min(chunk, cap - done), 10, tol)
        done += max(int(it), 1)
        if consider(s, w) <= tol:
            return best, done
        for kink, sg in _patterns(a, M, w_max, s, w):
            if polish(kink, sg) <= tol:
                return best, done
    if best[2] - best[3] <= tol:
        return best, done
    raise MaxIterations(
        f"subproblem gap {best[2] - best[3]:.3e} above tolerance {tol:.3e} after {done} iterations",
        gap=best[2] - best[3],
        iterations=done,
    )


def criticality_measure(lin: LinearizationData, model: PerturbationModel, tol, backend=None) -> CriticalityResult:
    """``max_{||s|| <= 1} delta_phi(x, s)`` with a certified gap ``<= tol``.

    ``measure`` is attained at ``s_star`` and the true maximum lies in
    ``[measure, measure + gap_bound]``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    (s, _, p, d), iters = _solve(lin, model, 0.0, True, tol, backend)
    nrm = float(np.sqrt(s @ s))
    if nrm > 1.0:
        s = s / nrm
    measure = max(0.0, delta_phi(lin, model, s))
    return CriticalityResult(measure, s, max(0.0, p - d), iters)


def solve_step(lin: LinearizationData, model: PerturbationModel, sigma, tol, backend=None) -> SubproblemSolution:
    """Approximate minimizer of ``phi(x, s) + sigma ||s||^2`` with gap ``<= tol``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    (s, _, p, d), iters = _solve(lin, model, float(sigma), False, tol, backend)
    if p > _primal(lin.g, lin.a, lin.M, 2.0 * model.delta, sigma, np.zeros_like(s)):
        s = np.zeros_like(s)
        p = _primal(lin.g, lin.a, lin.M, 2.0 * model.delta, sigma, s)
    value = model_value(lin, model, s) + sigma * float(s @ s)
    return SubproblemSolution(s=s, model_value=value, gap_bound=max(0.0, p - d), iterations=iters)
