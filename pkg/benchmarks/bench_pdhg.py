"""Compare the compiled and pure-Python primal-dual kernels.

Runs a fixed number of iterations of both backends on the same random
subproblems, checks that they produce the same iterates, and reports the
time per call and the speedup.  Usage::

    python3 benchmarks/bench_pdhg.py [--repeat 20] [--iters 2000]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from robustnls import _kernels


def make_case(rng, n, r, ball):
    g = rng.normal(size=n)
    a = rng.normal(size=r)
    M = np.ascontiguousarray(rng.normal(size=(r, n)))
    w_max = 0.4
    reg = 0.0 if ball else 1.5
    L = float(np.linalg.norm(M, 2))
    tau = 0.95 / (L * w_max)
    sig = 0.95 * w_max / L
    return g, a, M, w_max, reg, ball, tau, sig


def run(kernel, case, iters):
    g, a, M, w_max, reg, ball, tau, sig = case
    s = np.zeros(g.shape[0])
    w = w_max * np.sign(a)
    # tol = -inf disables the early exit so both backends do the same work
    kernel(g, a, M, w_max, reg, ball, tau, sig, s, w, iters, 10, -np.inf)
    return s, w


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--iters", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    python = _kernels.get_pdhg("python")
    try:
        compiled = _kernels.get_pdhg("cython")
    except ImportError:
        print("compiled backend not built; only the Python kernel is available")
        compiled = None

    rng = np.random.default_rng(args.seed)
    print(f"{'n':>4} {'r':>4} {'kind':>5} {'python ms':>10} {'cython ms':>10} {'speedup':>8} {'max diff':>9}")
    for n, r in [(2, 2), (5, 8), (20, 10), (50, 40)]:
        for ball in (True, False):
            case = make_case(rng, n, r, ball)
            t_py = min(timeit.repeat(lambda: run(python, case, args.iters), number=1, repeat=args.repeat))
            line = f"{n:>4} {r:>4} {'ball' if ball else 'step':>5} {1e3 * t_py:>10.3f}"
            if compiled is not None:
                t_c = min(timeit.repeat(lambda: run(compiled, case, args.iters), number=1, repeat=args.repeat))
                s_py, w_py = run(python, case, args.iters)
                s_c, w_c = run(compiled, case, args.iters)
                diff = max(np.max(np.abs(s_py - s_c)), np.max(np.abs(w_py - w_c)))
                line += f" {1e3 * t_c:>10.3f} {t_py / t_c:>8.1f} {diff:>9.1e}"
            print(line)


if __name__ == "__main__":
    main()
