"""Box-uncertainty model for the perturbation term ``C y``.

The solver never works with ``C`` directly.  ``C`` is factored once as
``C = Q diag(R) V^T`` (thin SVD), the perturbation variable is rotated to
``y_hat = V^T y`` and every downstream formula is evaluated with the diagonal
factor ``R``.  The uncertainty set is the box ``||y_hat||_inf <= delta``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NonFiniteInput, RankDeficient

__all__ = ["PerturbationModel", "build_perturbation", "to_original_coords", "rank_tolerance"]


def rank_tolerance(shape, sigma_max):
    """Numerical-rank threshold ``max(m, r) * eps * sigma_1``."""
    return max(shape) * np.finfo(float).eps * sigma_max


@dataclass(frozen=True)
class PerturbationModel:
    """Factored perturbation matrix and box radius.

    Attributes
    ----------
    c_raw : (m, r) ndarray
        The user supplied matrix ``C``.
    q : (m, r) ndarray
        Orthonormal left factor.
    r_diag : (r,) ndarray
        Positive singular values, sorted descending.
    v : (r, r) ndarray
        Orthogonal right factor; ``y = v @ y_hat``.
    delta : float
        Box radius.
    c_frob_sq : float
        ``||C||_F**2`` computed as ``sum(r_diag**2)``.
    """

    c_raw: np.ndarray
    q: np.ndarray
    r_diag: np.ndarray
    v: np.ndarray
    delta: float
    c_frob_sq: float

    @property
    def m(self) -> int:
        return self.q.shape[0]

    @property
    def r(self) -> int:
        return self.q.shape[1]

    def transformed_c(self) -> np.ndarray:
        """``Q diag(R)``, the perturbation matrix after rotating ``y``."""
        return self.q * self.r_diag


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def build_perturbation(c_raw, delta) -> PerturbationModel:
    """Factor ``C`` and validate the box radius.

    Singular values are sorted descending and each left singular vector is
    flipped so that its largest-magnitude entry is positive (the matching
    right singular vector is flipped with it), which makes the factors
    deterministic.

    Raises
    ------
    DimensionError
        ``C`` is not a matrix with ``m >= r >= 1``.
    NonFiniteInput
        ``C`` or ``delta`` has NaN/Inf entries.
    RankDeficient
        The smallest singular value falls below :func:`rank_tolerance`.
    """
    c = np.array(c_raw, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    if c.ndim != 2 or c.shape[1] < 1:
        raise DimensionError(f"C must be a 2-D matrix with at least one column, got shape {c.shape}")
    m, r = c.shape
    if m < r:
        raise DimensionError(f"C must have m >= r, got m={m}, r={r}")
    if not np.all(np.isfinite(c)):
        raise NonFiniteInput("C contains non-finite entries")
    delta = float(delta)
    if not np.isfinite(delta):
        raise NonFiniteInput("delta is not finite")
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")

    u, s, vt = np.linalg.svd(c, full_matrices=False)
    tol = rank_tolerance((m, r), s[0])
    if s[-1] <= tol:
        raise RankDeficient(
            f"C is rank deficient: smallest singular value {s[-1]:.3e} <= tolerance {tol:.3e}"
        )
    v = vt.T.copy()
    pivots = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivots, np.arange(r)])
    signs[signs == 0] = 1.0
    u = u * signs
    v = v * signs

    return PerturbationModel(
        c_raw=_freeze(c),
        q=_freeze(u),
        r_diag=_freeze(s),
        v=_freeze(v),
        delta=delta,
        c_frob_sq=float(np.sum(s * s)),
    )


def to_original_coords(model: PerturbationModel, y_hat) -> np.ndarray:
    """Map a transformed perturbation ``y_hat`` back to ``y = V y_hat``."""
    y_hat = np.asarray(y_hat, dtype=float)
    if y_hat.shape != (model.r,):
        raise DimensionError(f"y_hat must have shape ({model.r},), got {y_hat.shape}")
    if y_hat.size and np.max(np.abs(y_hat)) > model.delta + 1e-12:
        raise ValueError("y_hat lies outside the box ||y_hat||_inf <= delta")
    return model.v @ y_hat
