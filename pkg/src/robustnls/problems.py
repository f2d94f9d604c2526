"""Built-in residual problems, matrix files and problem manifests.

Matrix files hold one row per line with entries separated by single spaces;
vectors are single-column matrices.  A manifest is a ``key = value`` text
file naming the problem kind, dimensions, box radius and matrix files
(resolved relative to the manifest).
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NonFiniteInput, ParseError
from .perturbation import PerturbationModel, build_perturbation
from .solver import atomic_write
from .value_function import ResidualProblem

__all__ = [
    "KINDS",
    "ProblemSpec",
    "make_linear",
    "linear_spec",
    "make_composite_1d",
    "make_rosenbrock",
    "make_two_layer_net",
    "two_layer_net_dims",
    "make_zero_residual",
    "random_two_layer_net",
    "read_matrix",
    "read_vector",
    "write_matrix",
    "load_problem",
    "save_problem",
    "finite_difference_check",
    "ACTIVATIONS",
]

KINDS = ("Linear", "ZeroResidualNonlinear", "Composite1D", "TwoLayerNet", "Rosenbrock", "FromFile")


# --- problem factories --------------------------------------------------------

def _finite(name, arr):
    arr = np.array(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains non-finite entries")
    return arr


def make_linear(A, b, name="linear") -> ResidualProblem:
    """``F(x) = A x - b`` with constant Jacobian ``A``."""
    A = _finite("A", A)
    b = _finite("b", b).reshape(-1)
    if A.ndim != 2:
        raise DimensionError(f"A must be a matrix, got shape {A.shape}")
    if A.shape[0] != b.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
    A.setflags(write=False)
    b.setflags(write=False)
    return ResidualProblem(A.shape[1], A.shape[0], lambda x: A @ x - b, lambda x: A.copy(), name=name)


def make_composite_1d(name="composite1d") -> ResidualProblem:
    """``F(x) = (x - 1, x + 1)``; with ``C = e_1`` it gives ``psi = 2x^2 + 2 + 2 delta |x - 1|``."""
    return ResidualProblem(
        1, 2,
        lambda x: np.array([x[0] - 1.0, x[0] + 1.0]),
        lambda x: np.ones((2, 1)),
        name=name,
    )


def make_rosenbrock(n=2, name="rosenbrock") -> ResidualProblem:
    """Rosenbrock residuals ``10 (x_{i+1} - x_i^2)`` and ``1 - x_i``, ``m = 2 (n - 1)``."""
    if n < 2:
        raise DimensionError("Rosenbrock needs n >= 2")

    def fun(x):
        return np.concatenate([10.0 * (x[1:] - x[:-1] ** 2), 1.0 - x[:-1]])

    def jac(x):
        k = n - 1
        J = np.zeros((2 * k, n))
        idx = np.arange(k)
        J[idx, idx] = -20.0 * x[:-1]
        J[idx, idx + 1] = 10.0
        J[k + idx, idx] = -1.0
        return J

    return ResidualProblem(n, 2 * (n - 1), fun, jac, name=name)


def _tanh(z):
    t = np.tanh(z)
    return t, 1.0 - t * t


def _relu(z):
    return np.maximum(z, 0.0), (z > 0).astype(float)


def _softplus(z):
    return np.logaddexp(0.0, z), 0.5 * (1.0 + np.tanh(0.5 * z))


ACTIVATIONS = {"tanh": (_tanh, True), "softplus": (_softplus, True), "relu": (_relu, False)}


def two_layer_net_dims(k, l, nhat):
    """Parameter count of ``U (k x l), V (l x nhat), W (l x l), u (l), v (l)``."""
    return k * l + l * nhat + l * l + 2 * l


def _unpack(x, k, l, nhat):
    i = 0
    U = x[i:i + k * l].reshape(k, l); i += k * l
    V = x[i:i + l * nhat].reshape(l, nhat); i += l * nhat
    W = x[i:i + l * l].reshape(l, l); i += l * l
    u = x[i:i + l]; i += l
    v = x[i:i + l]
    return U, V, W, u, v


def make_two_layer_net(inputs, targets, l, activation="tanh", allow_nonsmooth=False,
                       name="two_layer_net") -> ResidualProblem:
    """Stacked residuals of the network ``b_i - U s(W s(V a_i + u) + v)``.

    ``x`` packs ``(vec U, vec V, vec W, u, v)`` with row-major ``vec``.
    Each residual block is scaled by ``1/sqrt(N)`` so that ``||F(x)||^2`` is
    the sample-averaged squared loss.

    Parameters
    ----------
    inputs : (N, nhat) array
    targets : (N, k) array
    l : int
        Hidden width.
    activation : {"tanh", "softplus", "relu"}
        ``"relu"`` is not differentiable and must be enabled explicitly with
        ``allow_nonsmooth=True``.
    """
    A = _finite("inputs", inputs)
    B = _finite("targets", targets)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.ndim != 2 or B.ndim != 2 or A.shape[0] != B.shape[0] or A.shape[0] < 1:
        raise DimensionError(f"inputs {A.shape} and targets {B.shape} must have matching N >= 1 rows")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    act, smooth = ACTIVATIONS[activation]
    if not smooth and not allow_nonsmooth:
        raise ValueError(f"activation {activation!r} is not differentiable; pass allow_nonsmooth=True")
    N, nhat = A.shape
    k = B.shape[1]
    n = two_layer_net_dims(k, l, nhat)
    scale = 1.0 / math.sqrt(N)

    def forward(x):
        U, V, W, u, v = _unpack(x, k, l, nhat)
        z1 = A @ V.T + u
        h1, d1 = act(z1)
        z2 = h1 @ W.T + v
        h2, d2 = act(z2)
        return U, W, h1, d1, h2, d2

    def fun(x):
        U, _, _, _, h2, _ = forward(x)
        return (scale * (B - h2 @ U.T)).reshape(-1)

    def jac(x):
        U, W, h1, d1, h2, d2 = forward(x)
        J = np.empty((N, k, n))
        eye_k = np.eye(k)
        for i in range(N):
            D2 = U * d2[i]
            D1 = (D2 @ W) * d1[i]
            J[i] = np.concatenate([
                np.kron(eye_k, h2[i][None, :]),
                np.einsum("kp,q->kpq", D1, A[i]).reshape(k, l * nhat),
                np.einsum("kp,q->kpq", D2, h1[i]).reshape(k, l * l),
                D1,
                D2,
            ], axis=1)
        return (-scale * J).reshape(N * k, n)

    return ResidualProblem(n, N * k, fun, jac, name=name)


def random_two_layer_net(N=4, k=2, l=3, nhat=2, seed=0, activation="tanh"):
    """Random data set for the network; returns ``(problem, x0)``."""
    rng = np.random.default_rng(seed)
    inputs = rng.normal(size=(N, nhat))
    targets = rng.normal(size=(N, k))
    prob = make_two_layer_net(inputs, targets, l, activation)
    x0 = 0.5 * rng.normal(size=prob.n)
    return prob, x0


# --- problem specs ----------------------------------------------------------------

@dataclass
class ProblemSpec:
    """Declarative problem description with ground truth where known.

    ``reference`` maps names to known values; ``reference_source`` records
    where each one comes from (``"construction"``, ``"closed form"``, ...).
    """

    kind: str
    n: int
    m: int
    r: int
    delta: float
    C: np.ndarray
    data: dict = field(default_factory=dict)
    x0: np.ndarray | None = None
    reference: dict = field(default_factory=dict)
    reference_source: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        C = np.asarray(self.C, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        if C.shape != (self.m, self.r):
            raise DimensionError(f"C: expected shape ({self.m}, {self.r}), got {C.shape}")
        if self.m < self.r:
            raise DimensionError(f"C: need m >= r, got m={self.m}, r={self.r}")
        self.C = C
        if self.x0 is None:
            self.x0 = np.zeros(self.n)

    def problem(self) -> ResidualProblem:
        d = self.data
        if self.kind in ("Linear", "FromFile"):
            prob = make_linear(d["A"], d["b"])
        elif self.kind == "Composite1D":
            prob = make_composite_1d()
        elif self.kind == "Rosenbrock":
            prob = make_rosenbrock(self.n)
        elif self.kind == "ZeroResidualNonlinear":
            prob = _zero_residual_problem(d["A"], d["x_star"], d.get("strength", 0.0))
        elif self.kind == "TwoLayerNet":
            prob = make_two_layer_net(d["inputs"], d["targets"], int(d["l"]),
                                      d.get("activation", "tanh"),
                                      allow_nonsmooth=d.get("activation") == "relu")
        else:  # pragma: no cover - guarded in __post_init__
            raise ValueError(self.kind)
        if (prob.n, prob.m) != (self.n, self.m):
            raise DimensionError(f"n/m: declared ({self.n}, {self.m}) but data give ({prob.n}, {prob.m})")
        return prob

    def perturbation(self) -> PerturbationModel:
        return build_perturbation(self.C, self.delta)


def _zero_residual_problem(A, x_star, strength):
    A = _finite("A", A)
    x_star = _finite("x_star", x_star).reshape(-1)
    if A.ndim != 2 or A.shape[1] != x_star.shape[0]:
        raise DimensionError(f"A {A.shape} incompatible with x_star {x_star.shape}")
    if strength <= -1.0:
        raise ValueError("strength must exceed -1 to keep G monotone")
    t_star = A @ x_star
    g_star = t_star + strength * np.tanh(t_star)

    def fun(x):
        t = A @ x
        return t + strength * np.tanh(t) - g_star

    def jac(x):
        t = A @ x
        return (1.0 + strength * (1.0 - np.tanh(t) ** 2))[:, None] * A

    return ResidualProblem(A.shape[1], A.shape[0], fun, jac, name="zero_residual")


def make_zero_residual(A=None, x_star=None, strength=0.0, C=None, delta=0.1, seed=None,
                       n=3, m=None, r=None) -> ProblemSpec:
    """Problem ``F(x) = G(x) - G(x_star)`` with ``G(x) = A x + strength * tanh(A x)``.

    ``G`` is injective when ``A`` has full column rank and ``strength > -1``,
    so ``x_star`` is the unique zero of ``F``.  Missing pieces are drawn from
    ``seed``.
    """
    rng = np.random.default_rng(seed)
    if A is None:
        m = n if m is None else m
        A = rng.normal(size=(m, n)) + 2.0 * np.eye(m, n)
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if x_star is None:
        x_star = rng.uniform(-1.0, 1.0, size=n)
    if C is None:
        r = m if r is None else r
        C = rng.uniform(-1.0, 1.0, size=(m, r)) + np.eye(m, r)
    C = np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    x_star = np.asarray(x_star, dtype=float)
    return ProblemSpec(
        kind="ZeroResidualNonlinear", n=n, m=m, r=C.shape[1], delta=delta, C=C,
        data={"A": A, "x_star": x_star, "strength": float(strength)},
        x0=np.zeros(n),
        reference={"x_star": x_star, "phi_min": float(np.sum(C * C)) * delta**2},
        reference_source={"x_star": "construction", "phi_min": "closed form at zero residual"},
    )


# --- matrix files -------------------------------------------------------------------

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def read_matrix(path) -> np.ndarray:
    """Parse a matrix file into a 2-D array."""
    rows = []
    with open(path, "r") as fh:
        lines = fh.read().split("\n")
    while lines and lines[-1].strip() == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r")
        if line == "":
            raise ParseError("empty line inside matrix", path, lineno, 1)
        row = []
        col = 1
        for tok in line.split(" "):
            if not _NUMBER.match(tok):
                raise ParseError(f"invalid number {tok!r}", path, lineno, col)
            row.append(float(tok))
            col += len(tok) + 1
        if rows and len(row) != len(rows[0]):
            raise ParseError(f"row has {len(row)} entries, expected {len(rows[0])}", path, lineno, 1)
        rows.append(row)
    if not rows:
        raise ParseError("matrix file is empty", path, 1, 1)
    return np.array(rows, dtype=float)


def read_vector(path) -> np.ndarray:
    M = read_matrix(path)
    if M.shape[1] != 1:
        raise ParseError(f"expected a single-column vector, got {M.shape[1]} columns", path)
    return M[:, 0]


def _fmt(v):
    s = repr(float(v))
    if not np.isfinite(v):
        raise NonFiniteInput("matrix files cannot hold non-finite values")
    return s


def write_matrix(path, M):
    """Write ``M`` (vectors become one column) with shortest round-trip reprs."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    text = "".join(" ".join(_fmt(v) for v in row) + "\n" for row in M)
    atomic_write(path, text)


# --- manifests ------------------------------------------------------------------------

_MANIFEST_KEYS = {"kind", "n", "m", "r", "delta", "A_file", "b_file", "C_file", "x0_file",
                  "N", "k", "l", "nhat", "activation", "strength", "name"}


def _parse_manifest(path):
    out = {}
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("expected 'key = value'", path, lineno, 1)
            key, val = (p.strip() for p in line.split("=", 1))
            if key not in _MANIFEST_KEYS:
                raise ParseError(f"unknown key {key!r}", path, lineno, 1)
            if key in out:
                raise ParseError(f"duplicate key {key!r}", path, lineno, 1)
            out[key] = (val, lineno)
    return out


def _get_int(man, key, path, default=None):
    if key not in man:
        if default is None:
            raise ParseError(f"missing key {key!r}", path)
        return default
    val, lineno = man[key]
    try:
        return int(val)
    except ValueError:
        raise ParseError(f"{key} must be an integer, got {val!r}", path, lineno) from None


def _get_float(man, key, path, default=None):
    if key not in man:
        if default is None:
            raise ParseError(f"missing key {key!r}", path)
        return default
    val, lineno = man[key]
    if not _NUMBER.match(val):
        raise ParseError(f"{key} must be a finite number, got {val!r}", path, lineno)
    return float(val)


def load_problem(manifest_path) -> ProblemSpec:
    """Read a manifest and the matrix files it references.

    Supported kinds and their files:

    * ``Linear`` / ``FromFile``: ``A_file`` (m x n), ``b_file`` (m)
    * ``ZeroResidualNonlinear``: ``A_file`` (m x n), ``b_file`` holds ``x_star``,
      optional ``strength``
    * ``TwoLayerNet``: ``A_file`` holds inputs (N x nhat), ``b_file`` targets
      (N x k), keys ``l`` and ``activation``
    * ``Composite1D``, ``Rosenbrock``: no data files

    ``C_file`` is always required.
    """
    path = os.fspath(manifest_path)
    base = os.path.dirname(os.path.abspath(path))
    man = _parse_manifest(path)

    def file_of(key, required=True):
        if key not in man:
            if required:
                raise ParseError(f"missing key {key!r}", path)
            return None
        return os.path.join(base, man[key][0])

    if "kind" not in man:
        raise ParseError("missing key 'kind'", path)
    kind = man["kind"][0]
    if kind not in KINDS:
        raise ParseError(f"unknown kind {kind!r}", path, man["kind"][1])
    n = _get_int(man, "n", path)
    m = _get_int(man, "m", path)
    r = _get_int(man, "r", path)
    delta = _get_float(man, "delta", path)
    if m < r:
        raise DimensionError(f"C: manifest declares m={m} < r={r}")
    C = read_matrix(file_of("C_file"))
    if C.shape != (m, r):
        raise DimensionError(f"C: expected shape ({m}, {r}), got {C.shape}")

    data = {}
    if kind in ("Linear", "FromFile", "ZeroResidualNonlinear"):
        A = read_matrix(file_of("A_file"))
        b = read_vector(file_of("b_file"))
        if A.shape != (m, n):
            raise DimensionError(f"A: expected shape ({m}, {n}), got {A.shape}")
        data["A"] = A
        if kind == "ZeroResidualNonlinear":
            if b.shape != (n,):
                raise DimensionError(f"b: expected x_star of length {n}, got {b.shape[0]}")
            data["x_star"] = b
            data["strength"] = _get_float(man, "strength", path, 0.0)
        else:
            if b.shape != (m,):
                raise DimensionError(f"b: expected length {m}, got {b.shape[0]}")
            data["b"] = b
    elif kind == "TwoLayerNet":
        inputs = read_matrix(file_of("A_file"))
        targets = read_matrix(file_of("b_file"))
        N = _get_int(man, "N", path, inputs.shape[0])
        k = _get_int(man, "k", path, targets.shape[1])
        nhat = _get_int(man, "nhat", path, inputs.shape[1])
        l = _get_int(man, "l", path)
        if inputs.shape != (N, nhat):
            raise DimensionError(f"A: expected inputs of shape ({N}, {nhat}), got {inputs.shape}")
        if targets.shape != (N, k):
            raise DimensionError(f"b: expected targets of shape ({N}, {k}), got {targets.shape}")
        if m != N * k or n != two_layer_net_dims(k, l, nhat):
            raise DimensionError(f"n/m: network shape gives n={two_layer_net_dims(k, l, nhat)}, m={N * k}")
        act = man["activation"][0] if "activation" in man else "tanh"
        if act not in ACTIVATIONS:
            raise ParseError(f"unknown activation {act!r}", path, man["activation"][1])
        data.update(inputs=inputs, targets=targets, l=l, activation=act)
    elif kind == "Composite1D":
        if (n, m) != (1, 2):
            raise DimensionError("n/m: Composite1D has n=1, m=2")
    elif kind == "Rosenbrock":
        if m != 2 * (n - 1):
            raise DimensionError(f"m: Rosenbrock with n={n} has m={2 * (n - 1)}")

    x0 = None
    if "x0_file" in man:
        x0 = read_vector(file_of("x0_file"))
        if x0.shape != (n,):
            raise DimensionError(f"x0: expected length {n}, got {x0.shape[0]}")
    return ProblemSpec(kind=kind, n=n, m=m, r=r, delta=delta, C=C, data=data, x0=x0,
                       reference={}, reference_source={})


def save_problem(spec: ProblemSpec, directory, stem="problem"):
    """Write ``spec`` as a manifest plus matrix files; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    lines = [f"kind = {spec.kind}", f"n = {spec.n}", f"m = {spec.m}", f"r = {spec.r}",
             f"delta = {spec.delta!r}"]

    def put(key, arr):
        fname = f"{stem}_{key[0]}.txt"
        write_matrix(os.path.join(directory, fname), arr)
        lines.append(f"{key} = {fname}")

    put("C_file", spec.C)
    d = spec.data
    if spec.kind in ("Linear", "FromFile"):
        put("A_file", d["A"])
        put("b_file", d["b"])
    elif spec.kind == "ZeroResidualNonlinear":
        put("A_file", d["A"])
        put("b_file", d["x_star"])
        lines.append(f"strength = {float(d.get('strength', 0.0))!r}")
    elif spec.kind == "TwoLayerNet":
        put("A_file", d["inputs"])
        put("b_file", d["targets"])
        lines.append(f"l = {int(d['l'])}")
        lines.append(f"activation = {d.get('activation', 'tanh')}")
    if spec.x0 is not None:
        put("x0_file", spec.x0)
    path = os.path.join(directory, f"{stem}.manifest")
    atomic_write(path, "\n".join(lines) + "\n")
    return path


# --- derivative checks ---------------------------------------------------------------

def finite_difference_check(problem: ResidualProblem, x, h=1e-6) -> float:
    """Largest relative deviation of ``F'(x)`` from central differences.

    Column ``j`` uses step ``h * max(1, |x_j|)``; the deviation of entry
    ``(i, j)`` is divided by ``max(1, |J_ij|)``.
    """
    x = np.asarray(x, dtype=float)
    J = problem.J(x)
    D = np.empty_like(J)
    for j in range(problem.n):
        step = h * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = step
        D[:, j] = (problem.F(x + e) - problem.F(x - e)) / (2.0 * step)
    return float(np.max(np.abs(J - D) / np.maximum(1.0, np.abs(J))))


def linear_spec(A, b, C, delta, x0=None) -> ProblemSpec:
    """``ProblemSpec`` for ``F(x) = A x - b``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    C = np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    return ProblemSpec(kind="Linear", n=A.shape[1], m=A.shape[0], r=C.shape[1], delta=delta, C=C,
                       data={"A": A, "b": b}, x0=x0)
