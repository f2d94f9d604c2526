"""Outer adaptive-regularization loop and minimax-point extraction.

``minimize_psi`` drives the composite objective ``psi`` to a point whose
criticality measure is at most ``epsilon``; ``extract_minimax`` then reads
the inner maximizer off the sign rule.  Together they give a first-order
epsilon-approximate minimax pair.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import MaxIterations, NonFiniteOutput
from .perturbation import PerturbationModel, to_original_coords
from .subproblem import (
    criticality_measure,
    delta_phi,
    linearization_from,
    linearize,
    solve_step,
)
from .value_function import InnerMaximizer, ResidualProblem, inner_argmax

__all__ = [
    "SolverParams",
    "TraceRecord",
    "SolveResult",
    "minimize_psi",
    "extract_minimax",
    "write_trace_csv",
    "trace_csv_text",
    "CONVERGED",
    "BUDGET_EXHAUSTED",
    "SUBPROBLEM_FAILURE",
]

CONVERGED = "Converged"
BUDGET_EXHAUSTED = "BudgetExhausted"
SUBPROBLEM_FAILURE = "SubproblemFailure"

TRACE_HEADER = ["iter", "psi", "phi", "measure", "sigma", "accepted", "F_evals", "J_evals"]


@dataclass(frozen=True)
class SolverParams:
    epsilon: float = 1e-6
    sigma0: float = 1.0
    sigma_min: float = 1e-8
    eta1: float = 0.1
    eta2: float = 0.9
    gamma_dec: float = 0.5
    gamma_inc: float = 2.0
    max_evals: int = 100_000
    max_stalls: int = 60

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.eta1 <= self.eta2 < 1:
            raise ValueError("need 0 < eta1 <= eta2 < 1")
        if not 0 < self.gamma_dec < 1:
            raise ValueError("gamma_dec must lie in (0, 1)")
        if not self.gamma_inc > 1:
            raise ValueError("gamma_inc must exceed 1")
        if not 0 < self.sigma_min <= self.sigma0:
            raise ValueError("need 0 < sigma_min <= sigma0")
        if self.max_evals < 1:
            raise ValueError("max_evals must be at least 1")


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    x_norm: float
    psi: float
    phi: float
    measure: float
    sigma: float
    accepted: bool
    F_evals: int
    J_evals: int


@dataclass
class SolveResult:
    x_final: np.ndarray
    psi_final: float
    phi_final: float
    measure_final: float
    measure_gap: float
    measure_tol: float
    y_hat: InnerMaximizer
    y_original: np.ndarray
    n_F_evals: int
    n_J_evals: int
    n_iterations: int
    status: str
    trace: list = field(default_factory=list)
    message: str = ""

    @property
    def converged(self):
        return self.status == CONVERGED

    @property
    def n_evals(self):
        return self.n_F_evals + self.n_J_evals


def _subproblem_tol(epsilon, last_measure, scale):
    tol = 0.1 * min(epsilon, last_measure)
    return max(tol, 1e-13 * scale)


def _lin_scale(lin, model):
    return max(1.0, float(np.linalg.norm(lin.g)), 2.0 * model.delta * float(np.sum(np.abs(lin.a))))


def _actual_decrease(model, F_old, F_new):
    """``psi(x) - psi(x + s)`` in difference form to limit cancellation."""
    sq = float((F_old - F_new) @ (F_old + F_new))
    xi_old = model.q.T @ F_old
    xi_new = model.q.T @ F_new
    l1 = float(model.r_diag @ (np.abs(xi_old) - np.abs(xi_new)))
    return sq + 2.0 * model.delta * l1


def minimize_psi(problem: ResidualProblem, model: PerturbationModel, x0, params: SolverParams | None = None,
                 backend=None) -> SolveResult:
    """Minimize ``psi(x) = ||F(x)||^2 + 2 delta ||C^T F(x)||_1`` from ``x0``.

    Each iteration solves ``min_s phi(x, s) + sigma ||s||^2``, accepts the
    trial point when the achieved-to-predicted decrease ratio is at least
    ``eta1`` and updates ``sigma`` by the ratio.  Criticality is tested at
    ``x0`` and after every accepted step; ``Converged`` means the certified
    upper bound ``measure + gap`` is at most ``epsilon``.

    The linearization is reused after a rejected step, so a rejected
    iteration costs one residual evaluation and no Jacobian evaluation.
    """
    params = params or SolverParams()
    eps = params.epsilon
    x = np.array(x0, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"x0 must have shape ({problem.n},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    F0, J0 = problem.n_F, problem.n_J

    def used():
        return problem.n_F - F0, problem.n_J - J0

    const = model.c_frob_sq * model.delta**2
    trace = []

    def record(k, psi, measure, sigma, accepted):
        nf, nj = used()
        trace.append(TraceRecord(k, float(np.linalg.norm(x)), psi, psi + const, measure, sigma,
                                 accepted, nf, nj))

    def finish(status, message=""):
        nf, nj = used()
        inner = inner_argmax(model, F_x)
        return SolveResult(
            x_final=x.copy(), psi_final=psi, phi_final=psi + const,
            measure_final=measure, measure_gap=gap, measure_tol=crit_tol,
            y_hat=inner, y_original=to_original_coords(model, inner.y_hat),
            n_F_evals=nf, n_J_evals=nj, n_iterations=len(trace) - 1,
            status=status, trace=trace, message=message,
        )

    F_x = problem.F(x)
    lin = linearize(problem, model, x, F_x=F_x)
    psi = lin.psi_x
    sigma = params.sigma0
    crit_tol = _subproblem_tol(eps, math.inf, _lin_scale(lin, model))
    try:
        measure, _, gap, _ = criticality_measure(lin, model, crit_tol, backend)
    except MaxIterations as exc:
        measure, gap = math.inf, math.inf
        record(0, psi, measure, sigma, True)
        return finish(SUBPROBLEM_FAILURE, str(exc))
    record(0, psi, measure, sigma, True)
    if measure + gap <= eps:
        return finish(CONVERGED)

    k = 0
    stalls = 0
    while True:
        nf, nj = used()
        if nf + nj >= params.max_evals:
            return finish(BUDGET_EXHAUSTED, "evaluation budget exhausted")
        if stalls >= params.max_stalls:
            return finish(BUDGET_EXHAUSTED, "predicted decrease below rounding level")
        k += 1
        step_tol = _subproblem_tol(eps, measure, _lin_scale(lin, model))
        try:
            step = solve_step(lin, model, sigma, step_tol, backend)
        except MaxIterations as exc:
            record(k, psi, measure, sigma, False)
            return finish(SUBPROBLEM_FAILURE, str(exc))
        pred = delta_phi(lin, model, step.s)
        if pred <= 1e-15 * max(1.0, abs(psi)):
            stalls += 1
            sigma *= params.gamma_inc
            record(k, psi, measure, sigma, False)
            continue
        stalls = 0

        x_trial = x + step.s
        try:
            F_trial = problem.F(x_trial)
        except NonFiniteOutput as exc:
            raise NonFiniteOutput(f"{exc} (iteration {k}, trial point)", x=x_trial) from exc
        rho = _actual_decrease(model, F_x, F_trial) / pred

        if rho >= params.eta2:
            sigma = max(params.sigma_min, params.gamma_dec * sigma)
        elif rho < params.eta1:
            sigma = params.gamma_inc * sigma

        if rho < params.eta1:
            record(k, psi, measure, sigma, False)
            continue

        x = x_trial
        F_x = F_trial
        lin = linearization_from(model, F_x, problem.J(x))
        psi = lin.psi_x
        crit_tol = _subproblem_tol(eps, measure, _lin_scale(lin, model))
        try:
            measure, _, gap, _ = criticality_measure(lin, model, crit_tol, backend)
        except MaxIterations as exc:
            record(k, psi, math.inf, sigma, True)
            return finish(SUBPROBLEM_FAILURE, str(exc))
        record(k, psi, measure, sigma, True)
        if measure + gap <= eps:
            return finish(CONVERGED)


def extract_minimax(problem: ResidualProblem, model: PerturbationModel, x_hat):
    """Inner maximizer at ``x_hat`` in rotated and original coordinates.

    Returns
    -------
    x_hat : ndarray
    inner : InnerMaximizer
    y_original : ndarray
        ``V y_hat``.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    inner = inner_argmax(model, problem.F(x_hat))
    return x_hat, inner, to_original_coords(model, inner.y_hat)


def _fmt(v):
    return repr(float(v))


def trace_csv_text(result: SolveResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for t in result.trace:
        w.writerow([t.iter, _fmt(t.psi), _fmt(t.phi), _fmt(t.measure), _fmt(t.sigma),
                    int(t.accepted), t.F_evals, t.J_evals])
    return buf.getvalue()


def atomic_write(path, text):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace_csv(result: SolveResult, path):
    """Write ``iter,psi,phi,measure,sigma,accepted,F_evals,J_evals`` rows."""
    atomic_write(path, trace_csv_text(result))
