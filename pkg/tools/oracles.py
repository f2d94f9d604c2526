"""Independent reference values for the test suite.

Each value here is computed without the package's solver or closed forms:
scalar problems by bounded scalar minimization, criticality measures by a
dense polar grid over the unit disk refined with Nelder-Mead, and step
subproblems by multi-start Nelder-Mead.  The printed numbers are frozen as
literals in ``tests/``; rerun this script to regenerate them.

    python3 tools/oracles.py
"""
import numpy as np
from scipy.optimize import minimize, minimize_scalar


def psi_1d(x, delta):
    # F(x) = (x - 1, x + 1), C = (1, 0)^T
    return (x - 1.0) ** 2 + (x + 1.0) ** 2 + 2.0 * delta * abs(x - 1.0)


def scalar_min(delta):
    res = minimize_scalar(lambda x: psi_1d(x, delta), bounds=(-3.0, 3.0), method="bounded",
                          options={"xatol": 1e-14})
    return res.x, res.fun


def dphi(F, J, C, delta, s):
    """Model decrease phi(x, 0) - phi(x, s) written directly in terms of C."""
    g = 2.0 * J.T @ F
    a = C.T @ F
    M = C.T @ J
    return -g @ s + 2.0 * delta * (np.sum(np.abs(a)) - np.sum(np.abs(a + M @ s)))


def disk_max(fun, n_r=400, n_t=2000):
    r = np.sqrt(np.linspace(0.0, 1.0, n_r))
    t = np.linspace(0.0, 2.0 * np.pi, n_t, endpoint=False)
    R, T = np.meshgrid(r, t)
    S = np.stack([R.ravel() * np.cos(T.ravel()), R.ravel() * np.sin(T.ravel())], axis=1)
    vals = np.array([fun(s) for s in S])
    s0 = S[np.argmax(vals)]

    def neg(p):
        s = p if p @ p <= 1.0 else p / np.sqrt(p @ p)
        return -fun(s)

    best = minimize(neg, s0, method="Nelder-Mead", options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 20000})
    return max(vals.max(), -best.fun)


def step_min(fun, n, starts=40, seed=0):
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(starts):
        res = minimize(fun, rng.normal(size=n), method="Nelder-Mead",
                       options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 40000})
        best = min(best, res.fun)
    return best


def rosen(x):
    return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]]), np.array([[-20.0 * x[0], 10.0], [-1.0, 0.0]])


def main():
    print("# scalar composite: minimizer and value")
    for d in (1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1, 0.5):
        x, v = scalar_min(d)
        print(f"delta={d!r} x_hat={x!r} psi={v!r}")

    print("# scalar composite: criticality measure at x = 0.35, delta = 0.5 (dense grid on [-1, 1])")
    x = 0.35
    F = np.array([x - 1.0, x + 1.0])
    J = np.array([[1.0], [1.0]])
    C = np.array([[1.0], [0.0]])
    grid = np.linspace(-1.0, 1.0, 2_000_001)
    print("measure", max(dphi(F, J, C, 0.5, np.array([s])) for s in grid[::1000]),
          max(-(2 * J.T @ F)[0] * grid + 2 * 0.5 * (abs(F[0]) - np.abs(F[0] + grid))))

    print("# Rosenbrock residuals, C = (1, 0.5)^T, delta = 0.3: criticality measure on the unit disk")
    C = np.array([[1.0], [0.5]])
    for x in (np.array([-1.2, 1.0]), np.array([0.5, 0.3]), np.array([0.9, 0.8])):
        F, J = rosen(x)
        print(f"x={x.tolist()} measure={disk_max(lambda s: dphi(F, J, C, 0.3, s))!r}")

    print("# linear, A = [[2, 1], [0, 1], [1, -1]], b = (1, 0, 2), C = diag-like (3x2), delta = 0.4")
    A = np.array([[2.0, 1.0], [0.0, 1.0], [1.0, -1.0]])
    b = np.array([1.0, 0.0, 2.0])
    C = np.array([[3.0, 0.0], [0.0, 0.0], [0.0, 4.0]])
    for x in (np.array([0.0, 0.0]), np.array([0.7, -0.2])):
        F = A @ x - b
        print(f"x={x.tolist()} measure={disk_max(lambda s: dphi(F, A, C, 0.4, s))!r}")
        for sigma in (0.5, 2.0):
            def obj(s, F=F, sigma=sigma):
                g = 2.0 * A.T @ F
                return F @ F + g @ s + 2.0 * 0.4 * np.sum(np.abs(C.T @ (F + A @ s))) + sigma * s @ s
            print(f"  sigma={sigma} step_value={step_min(obj, 2)!r}")


if __name__ == "__main__":
    main()
