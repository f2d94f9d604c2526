"""Checkable optimality statements for the robust least squares min-max problem.

Each check returns a :class:`Certificate`: a verdict plus the measured numbers
behind it.  All perturbations ``y`` are in the rotated coordinates of
:class:`~robustnls.perturbation.PerturbationModel`, and every ``C`` appearing
in a formula is the rotated ``Q diag(R)``, the same matrix the value function
and the solver use.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInput, DimensionError, NonFiniteInput, RankDeficient
from .perturbation import PerturbationModel, build_perturbation, rank_tolerance
from .problems import make_linear
from .solver import SolverParams, minimize_psi
from .subproblem import criticality_measure, linearize
from .value_function import ResidualProblem, inner_argmax, inner_max_bruteforce

__all__ = [
    "Certificate",
    "FIRST_ORDER_PAIR",
    "EPSILON_MINIMAX",
    "L1_INEQUALITY",
    "CLOSED_FORM_MATCH",
    "ERROR_BOUND_SLOPE",
    "check_first_order_pair",
    "check_epsilon_minimax",
    "check_l1_inequality",
    "ClosedFormRobust",
    "closed_form_min_norm_robust",
    "construct_C_remark",
    "error_bound_slope",
    "DemoReport",
    "demo_example_1_2",
    "format_certificates",
]

FIRST_ORDER_PAIR = "FirstOrderPair"
EPSILON_MINIMAX = "EpsilonMinimax"
L1_INEQUALITY = "L1Inequality"
CLOSED_FORM_MATCH = "ClosedFormMatch"
ERROR_BOUND_SLOPE = "ErrorBoundSlope"


@dataclass
class Certificate:
    kind: str
    passed: bool
    measures: dict
    tolerance: float
    note: str = ""

    def lines(self, prefix=""):
        out = [f"{prefix}kind={self.kind}", f"{prefix}passed={str(self.passed).lower()}",
               f"{prefix}tolerance={self.tolerance!r}"]
        for k, v in self.measures.items():
            out.append(f"{prefix}{k}={float(v)!r}")
        if self.note:
            out.append(f"{prefix}note={self.note}")
        return out


def format_certificates(named):
    """``name.key=value`` lines for an iterable of ``(name, Certificate)``."""
    lines = []
    for name, cert in named:
        lines.extend(cert.lines(prefix=f"{name}."))
    return "\n".join(lines) + "\n"


def _proj_box(y, delta):
    return np.clip(y, -delta, delta)


def check_first_order_pair(problem: ResidualProblem, model: PerturbationModel, x, y, alpha=1.0,
                           tol=None) -> Certificate:
    """Gradient-based stationarity of the pair ``(x, y)``.

    Measures ``||F'(x)^T (F(x) - C y)||`` and the fixed-point residual
    ``||y - P(y - alpha C^T (F(x) - C y))||_inf`` of the box projection ``P``.
    The projection residual is also taken at ``alpha/10`` and ``10 alpha``;
    in exact arithmetic the fixed-point set does not depend on ``alpha``.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (model.r,):
        raise DimensionError(f"y must have shape ({model.r},), got {y.shape}")
    F_x = problem.F(x)
    J_x = problem.J(x)
    c_hat = model.transformed_c()
    res = F_x - c_hat @ y
    grad = float(np.linalg.norm(J_x.T @ res))
    ascent = c_hat.T @ res
    proj = {}
    for label, a in (("", alpha), ("_alpha_div10", alpha / 10.0), ("_alpha_mul10", alpha * 10.0)):
        proj[label] = float(np.max(np.abs(y - _proj_box(y - a * ascent, model.delta)), initial=0.0))
    if tol is None:
        tol = 1e-8 * max(1.0, float(np.linalg.norm(F_x)), np.sqrt(model.c_frob_sq) * model.delta)
    measures = {
        "grad_residual": grad,
        "proj_residual": proj[""],
        "proj_residual_alpha_div10": proj["_alpha_div10"],
        "proj_residual_alpha_mul10": proj["_alpha_mul10"],
        "f_value": float(res @ res),
    }
    passed = grad <= tol and max(proj.values()) <= tol
    return Certificate(FIRST_ORDER_PAIR, bool(passed), measures, float(tol))


def check_epsilon_minimax(problem: ResidualProblem, model: PerturbationModel, x, y_hat, epsilon,
                          backend=None) -> Certificate:
    """First-order epsilon-approximate minimax test for ``(x, y_hat)``.

    Passes when the criticality measure at ``x`` is at most ``epsilon`` and
    ``y_hat`` attains the inner maximum, ``phi(x) - f(x, y_hat) <=
    1e-10 max(1, phi(x))``.  The measure is recomputed with gap tolerance
    ``epsilon / 10``; its certified gap is reported alongside.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    lin = linearize(problem, model, x)
    crit = criticality_measure(lin, model, 0.1 * epsilon, backend)
    phi = lin.psi_x + model.c_frob_sq * model.delta**2
    res = lin.F_x - model.transformed_c() @ y_hat
    inner_gap = phi - float(res @ res)
    passed = crit.measure <= epsilon and inner_gap <= 1e-10 * max(1.0, phi)
    return Certificate(
        EPSILON_MINIMAX,
        bool(passed),
        {"measure": crit.measure, "measure_gap": crit.gap_bound, "inner_gap": inner_gap, "phi": phi},
        float(epsilon),
    )


def check_l1_inequality(problem: ResidualProblem, model: PerturbationModel, x_hat, x_star,
                        tol=1e-8) -> Certificate:
    """``||C^T F(x_hat)||_1 <= ||C^T F(x_star)||_1`` for robust vs least squares solutions.

    The inequality follows from ``phi(x_hat) <= phi(x_star)`` together with
    ``||F(x_star)||^2 <= ||F(x_hat)||^2``; the second premise is checked and a
    violation fails the certificate with ``precondition_violation > 0``.
    """
    F_hat = problem.F(x_hat)
    F_star = problem.F(x_star)
    c_hat = model.transformed_c()
    l1_hat = float(np.sum(np.abs(c_hat.T @ F_hat)))
    l1_star = float(np.sum(np.abs(c_hat.T @ F_star)))
    sq_hat = float(F_hat @ F_hat)
    sq_star = float(F_star @ F_star)
    violation = max(0.0, sq_star - sq_hat - tol)
    passed = violation == 0.0 and l1_hat <= l1_star + tol
    return Certificate(
        L1_INEQUALITY,
        bool(passed),
        {"l1_robust": l1_hat, "l1_least_squares": l1_star, "sq_robust": sq_hat,
         "sq_least_squares": sq_star, "precondition_violation": violation},
        float(tol),
        note="" if violation == 0.0 else "least squares candidate has larger residual than robust candidate",
    )


class ClosedFormRobust(NamedTuple):
    x_hat: np.ndarray | None
    eta: float
    delta_max: float
    applicable: bool
    x_star: np.ndarray


def _pinv(A):
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(A.T.shape)
    keep = s > rank_tolerance(A.shape, s[0])
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def closed_form_min_norm_robust(A, b, model: PerturbationModel) -> ClosedFormRobust:
    """Minimum-norm robust solution of a linear problem when no kink is active.

    With ``x_star = A^+ b`` and ``eta = min_i |C^T (A x_star - b)|_i``, for
    ``0 < delta < eta / (r ||C^T (A^T)^+ (C^T A)^T||_1)`` the minimum-norm
    minimizer of ``phi`` is

        x_hat = (A^T A)^+ (A^T b - delta A^T C sgn(C^T (A x_star - b))).

    ``||.||_1`` is the induced (max column sum) norm.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise NonFiniteInput("A and b must be finite")
    if A.ndim != 2 or A.shape[0] != b.shape[0] or A.shape[0] != model.m:
        raise DimensionError(f"A {A.shape}, b {b.shape} incompatible with C of m={model.m}")
    c = model.transformed_c()
    x_star = _pinv(A) @ b
    resid_c = c.T @ (A @ x_star - b)
    eta = float(np.min(np.abs(resid_c)))
    K = c.T @ _pinv(A.T) @ (c.T @ A).T
    knorm = float(np.linalg.norm(K, 1))
    delta_max = eta / (model.r * knorm) if knorm > 0 else np.inf
    applicable = eta > 0 and 0 < model.delta < delta_max
    x_hat = None
    if applicable:
        sg = np.sign(resid_c)
        x_hat = _pinv(A.T @ A) @ (A.T @ b - model.delta * (A.T @ (c @ sg)))
    return ClosedFormRobust(x_hat, eta, float(delta_max), bool(applicable), x_star)


def construct_C_remark(F_xstar, r) -> np.ndarray:
    """Full-rank ``C`` whose columns all correlate strongly with ``F(x_star)``.

    Entry ``(i, j)`` is ``s_i * (2r if i == j else 1)`` with ``s_i = +1`` if
    ``F_i >= 0`` and ``-1`` otherwise.  The leading ``r x r`` block is strictly
    diagonally dominant, so ``rank C = r``, and every component of
    ``C^T F(x_star)`` is at least ``||F(x_star)||_1``.
    """
    F = np.asarray(F_xstar, dtype=float).reshape(-1)
    m = F.shape[0]
    if not 1 <= r <= m:
        raise DimensionError(f"need 1 <= r <= m, got r={r}, m={m}")
    if not np.any(F != 0):
        raise DegenerateInput("F(x_star) is zero; the construction needs a nonzero residual")
    sg = np.where(F >= 0, 1.0, -1.0)
    C = np.tile(sg[:, None], (1, r))
    idx = np.arange(r)
    C[idx, idx] *= 2 * r
    sv = np.linalg.svd(C, compute_uv=False)
    if sv[-1] <= rank_tolerance(C.shape, sv[0]):
        raise RankDeficient("constructed C lost rank")  # cannot happen in exact arithmetic
    return C


def _as_family(obj):
    return obj if callable(obj) else (lambda _delta: obj)


def error_bound_slope(problem_family, model_family, deltas, x_star=None, params=None, bound=None,
                      x_hats=None, floor=1e-10) -> Certificate:
    """Fit ``log dist(x_star, x_hat(delta))`` against ``log delta``.

    Parameters
    ----------
    problem_family : ResidualProblem or callable ``delta -> ResidualProblem``
    model_family : callable ``delta -> PerturbationModel``
    deltas : sequence of float
        At least four positive values spanning a decade or more.
    x_star : array, optional
        Least squares solution; solved at ``delta = 0`` when omitted.
    bound : callable ``delta -> float``, optional
        Upper bound on the distance; every ``delta`` must satisfy it.
    x_hats : callable ``delta -> array``, optional
        Robust solutions (e.g. closed form); solved with ``minimize_psi``
        starting from ``x_star`` when omitted.

    Passes when the fitted slope is at least 0.9.  If every distance is
    below ``floor`` the fit is skipped and the certificate passes as
    degenerate.  The distance is to the computed solution only, which
    bounds the distance to the solution set from above.
    """
    deltas = np.asarray(sorted(float(d) for d in deltas))
    if deltas.size < 4 or np.any(deltas <= 0) or deltas[-1] / deltas[0] < 10.0 - 1e-12:
        raise ValueError("need at least 4 positive deltas spanning one decade")
    params = params or SolverParams(epsilon=1e-9)
    pf = _as_family(problem_family)
    if x_star is None:
        res0 = minimize_psi(pf(0.0), model_family(0.0), np.zeros(pf(0.0).n), params)
        x_star = res0.x_final
    x_star = np.asarray(x_star, dtype=float)
    measures = {}
    dists = []
    bound_ok = True
    for d in map(float, deltas):
        if x_hats is not None:
            xh = np.asarray(x_hats(d), dtype=float)
        else:
            res = minimize_psi(pf(d), model_family(d), x_star, params)
            if not res.converged:
                raise RuntimeError(f"robust solve failed at delta={d}: {res.status} {res.message}")
            xh = res.x_final
        dist = float(np.linalg.norm(xh - x_star))
        dists.append(dist)
        measures[f"dist[{d!r}]"] = dist
        if bound is not None:
            bd = float(bound(d))
            measures[f"bound[{d!r}]"] = bd
            bound_ok = bound_ok and dist <= bd + 1e-8
    dists = np.asarray(dists)
    if np.all(dists < floor):
        measures.update(slope=np.nan, intercept=np.nan, degenerate=1.0)
        return Certificate(ERROR_BOUND_SLOPE, bound_ok, measures, 0.9,
                           note="all distances below floor; slope fit skipped")
    keep = dists >= floor
    if keep.sum() < 2:
        measures.update(slope=np.nan, intercept=np.nan, degenerate=0.0)
        return Certificate(ERROR_BOUND_SLOPE, False, measures, 0.9, note="too few resolvable distances")
    slope, intercept = np.polyfit(np.log(deltas[keep]), np.log(dists[keep]), 1)
    measures.update(slope=float(slope), intercept=float(intercept), degenerate=0.0,
                    bound_ok=float(bound_ok))
    return Certificate(ERROR_BOUND_SLOPE, bool(slope >= 0.9 and bound_ok), measures, 0.9,
                       note="checks O(delta) scaling only; the existential bound constants are not computed")


@dataclass
class DemoReport:
    """Facts about the robust linear example with ``C = I``."""

    A: np.ndarray
    b: np.ndarray
    delta: float
    entries: list = field(default_factory=list)  # (name, Certificate, expected_pass)

    @property
    def all_expected(self):
        return all(c.passed == want for _, c, want in self.entries)

    def certificate(self, name):
        for nm, c, _ in self.entries:
            if nm == name:
                return c
        raise KeyError(name)

    def text(self):
        lines = [f"delta={self.delta!r}", f"n={self.A.shape[0]}",
                 f"all_expected={str(self.all_expected).lower()}"]
        for name, cert, want in self.entries:
            lines.append(f"{name}.expected={'pass' if want else 'fail'}")
            lines.extend(cert.lines(prefix=f"{name}."))
        return "\n".join(lines) + "\n"


def demo_example_1_2(n=3, delta=0.2, seed=0, n_pairs=4, params=None) -> DemoReport:
    """Robust linear least squares with ``F(x) = A x - b`` and ``C = I``.

    Reproduces five facts:

    1. ``sign_rule``: the explicit inner maximizer matches vertex enumeration.
    2. ``min_value``: the solver reaches ``x = A^{-1} b`` with ``phi = n delta^2``.
    3. ``stationary_k``: pairs ``(A^{-1}(b + y), y)`` satisfy the gradient
       conditions and have ``f = 0``.
    4. ``not_minimax_k``: the same pairs fail the minimax test.
    5. ``minimax_not_stationary``: ``(A^{-1} b, delta e)`` fails the gradient
       conditions with residual ``delta ||A^T e||``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    while True:
        A = rng.normal(size=(n, n))
        if np.linalg.cond(A) <= 1e6:
            break
    b = rng.normal(size=n)
    prob = make_linear(A, b)
    model = build_perturbation(np.eye(n), delta)
    x_star = np.linalg.solve(A, b)
    report = DemoReport(A=A, b=b, delta=delta)
    params = params or SolverParams(epsilon=1e-9)

    # 1. sign rule vs enumeration at a generic point
    x_probe = x_star + rng.normal(size=n)
    F_probe = prob.F(x_probe)
    inner = inner_argmax(model, F_probe)
    expected_y = np.where(F_probe < 0, delta, -delta)
    bf_val, _ = inner_max_bruteforce(prob, model, x_probe) if n <= 20 else (inner.value, None)
    err = abs(inner.value - bf_val) / max(1.0, bf_val)
    mismatch = float(np.max(np.abs(np.where(inner.tie_mask, 0.0, inner.y_hat - expected_y))))
    report.entries.append(("sign_rule", Certificate(
        CLOSED_FORM_MATCH, bool(err <= 1e-12 and mismatch == 0.0),
        {"value_rel_err": err, "y_mismatch": mismatch}, 1e-12), True))

    # 2. minimax value n delta^2 at A^{-1} b
    res = minimize_psi(prob, model, np.zeros(n), params)
    expected = n * delta**2
    dist = float(np.linalg.norm(res.x_final - x_star))
    report.entries.append(("min_value", Certificate(
        CLOSED_FORM_MATCH, bool(res.converged and abs(res.phi_final - expected) <= 1e-6 and dist <= 1e-4),
        {"phi_final": res.phi_final, "reference": expected, "abs_err": abs(res.phi_final - expected),
         "dist_to_solution": dist, "measure": res.measure_final}, 1e-6), True))

    # 3./4. stationary pairs with f = 0 are not minimax points
    ys = [delta * np.ones(n), -delta * np.ones(n)]
    while len(ys) < n_pairs:
        ys.append(rng.uniform(-delta, delta, size=n))
    for k, y in enumerate(ys[:n_pairs]):
        x_pair = np.linalg.solve(A, b + y)
        report.entries.append((f"stationary_{k}", check_first_order_pair(prob, model, x_pair, y, tol=1e-10), True))
        report.entries.append((f"not_minimax_{k}", check_epsilon_minimax(prob, model, x_pair, y, 1e-6), False))

    # 5. the minimax point is not stationary
    e = np.ones(n)
    cert = check_first_order_pair(prob, model, x_star, delta * e, tol=1e-10)
    cert.measures["expected_grad_residual"] = delta * float(np.linalg.norm(A.T @ e))
    report.entries.append(("minimax_not_stationary", cert, False))
    return report
