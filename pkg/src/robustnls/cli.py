"""Command-line front end.

Subcommands::

    robustnls solve        --manifest P [--epsilon E] [--trace out.csv] [--report out.txt]
    robustnls certify      --manifest P [--epsilon E] [--report out.txt]
    robustnls oracle-check --manifest P [--samples K] [--seed S]
    robustnls errorbound   --manifest P --deltas d1,d2,... [--report out.txt]
    robustnls demo         [--n N] [--delta D] [--seed S]

Reports are ``name=value`` lines (stdout unless ``--report`` is given);
files are written atomically.  Exit codes: 0 success, 1 usage or input
error, 2 evaluation budget exhausted, 3 subproblem failure or non-finite
residual, 4 a requested check failed.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field

import numpy as np

from . import certificates as cert
from .errors import NonFiniteOutput, RobustNLSError, TooManyVertices
from .perturbation import build_perturbation
from .problems import load_problem
from .solver import (BUDGET_EXHAUSTED, CONVERGED, SolverParams, atomic_write, minimize_psi,
                     write_trace_csv)
from .value_function import eval_phi, inner_max_bruteforce

__all__ = ["UsageError", "RunConfig", "parse_args", "run", "main"]

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_BUDGET = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4

COMMANDS = ("solve", "certify", "oracle-check", "errorbound", "demo")
_DEFAULTS = SolverParams()


class UsageError(Exception):
    """Bad command line; the message names the offending flag."""


@dataclass
class RunConfig:
    command: str
    manifest: str | None = None
    epsilon: float = _DEFAULTS.epsilon
    max_evals: int = _DEFAULTS.max_evals
    sigma0: float = _DEFAULTS.sigma0
    eta1: float = _DEFAULTS.eta1
    eta2: float = _DEFAULTS.eta2
    gamma_inc: float = _DEFAULTS.gamma_inc
    gamma_dec: float = _DEFAULTS.gamma_dec
    trace: str | None = None
    report: str | None = None
    seed: int = 0
    samples: int = 200
    deltas: list = field(default_factory=list)
    n: int = 3
    delta: float = 0.2

    def solver_params(self) -> SolverParams:
        return SolverParams(epsilon=self.epsilon, sigma0=self.sigma0, sigma_min=min(_DEFAULTS.sigma_min, self.sigma0),
                            eta1=self.eta1, eta2=self.eta2, gamma_dec=self.gamma_dec,
                            gamma_inc=self.gamma_inc, max_evals=self.max_evals)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    p = _Parser(prog="robustnls", description="Robust nonlinear least squares under box perturbations.")
    sub = p.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name != "demo":
            sp.add_argument("--manifest")
        if name in ("solve", "certify", "errorbound"):
            sp.add_argument("--epsilon", type=float, default=_DEFAULTS.epsilon)
            sp.add_argument("--max-evals", dest="max_evals", type=int, default=_DEFAULTS.max_evals)
            sp.add_argument("--sigma0", type=float, default=_DEFAULTS.sigma0)
            sp.add_argument("--eta1", type=float, default=_DEFAULTS.eta1)
            sp.add_argument("--eta2", type=float, default=_DEFAULTS.eta2)
            sp.add_argument("--gamma-inc", dest="gamma_inc", type=float, default=_DEFAULTS.gamma_inc)
            sp.add_argument("--gamma-dec", dest="gamma_dec", type=float, default=_DEFAULTS.gamma_dec)
        if name == "solve":
            sp.add_argument("--trace")
        if name == "errorbound":
            sp.add_argument("--deltas")
        if name == "oracle-check":
            sp.add_argument("--samples", type=int, default=200)
        if name == "demo":
            sp.add_argument("--n", type=int, default=3)
            sp.add_argument("--delta", type=float, default=0.2)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--report")
    return p


def parse_args(argv) -> RunConfig:
    """Parse and validate ``argv``; raises :class:`UsageError` naming the flag."""
    ns = _build_parser().parse_args(list(argv))
    if ns.command is None:
        raise UsageError(f"a command is required: one of {', '.join(COMMANDS)}")
    kw = {k: v for k, v in vars(ns).items() if v is not None}
    if ns.command != "demo" and not kw.get("manifest"):
        raise UsageError(f"{ns.command}: --manifest is required")
    if "epsilon" in kw and not kw["epsilon"] > 0:
        raise UsageError("--epsilon must be positive")
    if "max_evals" in kw and kw["max_evals"] < 1:
        raise UsageError("--max-evals must be at least 1")
    if "sigma0" in kw and not kw["sigma0"] > 0:
        raise UsageError("--sigma0 must be positive")
    if "eta1" in kw and not 0 < kw["eta1"] < 1:
        raise UsageError("--eta1 must lie in (0, 1)")
    if "eta2" in kw and not kw.get("eta1", 0) <= kw["eta2"] < 1:
        raise UsageError("--eta2 must lie in [eta1, 1)")
    if "gamma_inc" in kw and not kw["gamma_inc"] > 1:
        raise UsageError("--gamma-inc must exceed 1")
    if "gamma_dec" in kw and not 0 < kw["gamma_dec"] < 1:
        raise UsageError("--gamma-dec must lie in (0, 1)")
    if "samples" in kw and kw["samples"] < 1:
        raise UsageError("--samples must be at least 1")
    if ns.command == "demo":
        if kw["n"] < 1:
            raise UsageError("--n must be at least 1")
        if not kw["delta"] > 0:
            raise UsageError("--delta must be positive")
    if ns.command == "errorbound":
        if "deltas" not in kw:
            raise UsageError("errorbound: --deltas is required")
        try:
            deltas = [float(t) for t in kw["deltas"].split(",") if t.strip()]
        except ValueError:
            raise UsageError(f"--deltas must be a comma-separated list of numbers, got {kw['deltas']!r}") from None
        if len(deltas) < 4 or any(not d > 0 for d in deltas) or max(deltas) < 10 * min(deltas):
            raise UsageError("--deltas needs at least 4 positive values spanning a decade")
        kw["deltas"] = deltas
    return RunConfig(**kw)


# --- commands --------------------------------------------------------------------------

def _kv(name, value):
    if isinstance(value, bool):
        return f"{name}={str(value).lower()}"
    if isinstance(value, (float, np.floating)):
        return f"{name}={float(value)!r}"
    if isinstance(value, np.ndarray):
        return f"{name}=" + ",".join(repr(float(v)) for v in value.ravel())
    return f"{name}={value}"


def _emit(cfg, lines, out):
    text = "\n".join(lines) + "\n"
    if cfg.report:
        atomic_write(cfg.report, text)
    else:
        out.write(text)


def _solve_lines(res, spec):
    lines = [
        _kv("status", res.status),
        _kv("psi_final", res.psi_final),
        _kv("phi_final", res.phi_final),
        _kv("measure_final", res.measure_final),
        _kv("measure_gap", res.measure_gap),
        _kv("n_iterations", res.n_iterations),
        _kv("n_F_evals", res.n_F_evals),
        _kv("n_J_evals", res.n_J_evals),
        _kv("x_final", res.x_final),
        _kv("y_hat", res.y_hat.y_hat),
        _kv("y_original", res.y_original),
        _kv("all_ties", bool(res.y_hat.all_ties)),
    ]
    if "phi_min" in spec.reference:
        lines.append(_kv("reference_phi_min", spec.reference["phi_min"]))
    if res.message:
        lines.append(_kv("message", res.message))
    return lines


def _status_code(res):
    if res.status == CONVERGED:
        return EXIT_OK
    if res.status == BUDGET_EXHAUSTED:
        return EXIT_BUDGET
    return EXIT_SOLVER


def _cmd_solve(cfg, out):
    spec = load_problem(cfg.manifest)
    prob, model = spec.problem(), spec.perturbation()
    res = minimize_psi(prob, model, spec.x0, cfg.solver_params())
    if cfg.trace:
        write_trace_csv(res, cfg.trace)
    _emit(cfg, [_kv("command", "solve")] + _solve_lines(res, spec), out)
    return _status_code(res)


def _cmd_certify(cfg, out):
    spec = load_problem(cfg.manifest)
    prob, model = spec.problem(), spec.perturbation()
    params = cfg.solver_params()
    res = minimize_psi(prob, model, spec.x0, params)
    lines = [_kv("command", "certify")] + _solve_lines(res, spec)
    if not res.converged:
        _emit(cfg, lines, out)
        return _status_code(res)
    named = [("epsilon_minimax", cert.check_epsilon_minimax(prob, model, res.x_final, res.y_hat.y_hat, cfg.epsilon)),
             ("first_order_pair", cert.check_first_order_pair(prob, model, res.x_final, res.y_hat.y_hat))]
    ls = minimize_psi(prob, build_perturbation(spec.C, 0.0), spec.x0, params)
    if ls.converged:
        named.append(("l1_inequality", cert.check_l1_inequality(prob, model, res.x_final, ls.x_final)))
    if spec.kind in ("Linear", "FromFile"):
        cf = cert.closed_form_min_norm_robust(spec.data["A"], spec.data["b"], model)
        lines += [_kv("closed_form.applicable", cf.applicable), _kv("closed_form.eta", cf.eta),
                  _kv("closed_form.delta_max", cf.delta_max)]
        if cf.applicable:
            psi_cf = float(np.sum((spec.data["A"] @ cf.x_hat - spec.data["b"]) ** 2)) + 2.0 * model.delta * float(
                np.sum(np.abs(model.transformed_c().T @ (spec.data["A"] @ cf.x_hat - spec.data["b"]))))
            lines += [_kv("closed_form.psi", psi_cf), _kv("closed_form.psi_diff", psi_cf - res.psi_final)]
    lines += cert.format_certificates(named).splitlines()
    _emit(cfg, lines, out)
    # the first-order pair check is informative only: minimax points need not satisfy it
    return EXIT_OK if named[0][1].passed else EXIT_CHECK


def _cmd_oracle(cfg, out):
    spec = load_problem(cfg.manifest)
    prob, model = spec.problem(), spec.perturbation()
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(cfg.samples):
        x = spec.x0 + rng.normal(size=spec.n)
        phi = eval_phi(prob, model, x)
        ref, _ = inner_max_bruteforce(prob, model, x)
        worst = max(worst, abs(phi - ref) / max(1.0, abs(ref)))
    ok = worst <= 1e-9
    _emit(cfg, [_kv("command", "oracle-check"), _kv("samples", cfg.samples), _kv("seed", cfg.seed),
                _kv("max_rel_deviation", worst), _kv("tolerance", 1e-9), _kv("passed", ok)], out)
    return EXIT_OK if ok else EXIT_CHECK


def _cmd_errorbound(cfg, out):
    spec = load_problem(cfg.manifest)
    prob = spec.problem()
    c = cert.error_bound_slope(prob, lambda d: build_perturbation(spec.C, d), cfg.deltas,
                               params=cfg.solver_params())
    lines = [_kv("command", "errorbound")] + c.lines()
    _emit(cfg, lines, out)
    return EXIT_OK if c.passed else EXIT_CHECK


def _cmd_demo(cfg, out):
    report = cert.demo_example_1_2(cfg.n, cfg.delta, cfg.seed)
    _emit(cfg, ["command=demo"] + report.text().splitlines(), out)
    return EXIT_OK if report.all_expected else EXIT_CHECK


_COMMANDS = {"solve": _cmd_solve, "certify": _cmd_certify, "oracle-check": _cmd_oracle,
             "errorbound": _cmd_errorbound, "demo": _cmd_demo}


def run(cfg: RunConfig, out=None, err=None) -> int:
    """Execute ``cfg``; returns the exit status."""
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        return _COMMANDS[cfg.command](cfg, out)
    except NonFiniteOutput as exc:
        err.write(f"error: {exc}\n")
        return EXIT_SOLVER
    except TooManyVertices as exc:
        err.write(f"error: --manifest: {exc}\n")
        return EXIT_INPUT
    except (RobustNLSError, ValueError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        err.write(f"error: {exc.filename or ''}: {exc.strerror or exc}\n")
        return EXIT_INPUT


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_INPUT
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
