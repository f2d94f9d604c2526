"""Pure-NumPy fallback for the compiled primal-dual loop (same contract)."""
import numpy as np


def _primal(g, a, M, w_max, reg, s):
    return float(g @ s + w_max * np.sum(np.abs(a + M @ s)) + reg * (s @ s))


def _dual(g, a, M, reg, ball, w):
    u = g + M.T @ w
    nrm = float(u @ u)
    if ball:
        return float(a @ w) - np.sqrt(nrm), u
    return float(a @ w) - nrm / (4.0 * reg), u


def pdhg(g, a, M, w_max, reg, ball, tau, sig, s, w, max_iter, check_every, tol):
    """Run the primal-dual iteration in place on ``s`` and ``w``.

    Returns ``(iterations, primal, dual)`` for the best pair seen at a check,
    which is left in ``s`` and ``w``.
    """
    shrink = 1.0 / (1.0 + 2.0 * tau * reg)
    s_best, w_best = s.copy(), w.copy()
    best_p = _primal(g, a, M, w_max, reg, s)
    best_d, _ = _dual(g, a, M, reg, ball, w)
    MT = M.T
    it = 0
    while it < max_iter and best_p - best_d > tol:
        s_new = s - tau * (g + MT @ w)
        if ball:
            nrm = np.sqrt(s_new @ s_new)
            if nrm > 1.0:
                s_new = s_new / nrm
        else:
            s_new = s_new * shrink
        sbar = 2.0 * s_new - s
        s[:] = s_new
        np.clip(w + sig * (a + M @ sbar), -w_max, w_max, out=w)
        it += 1

        if it % check_every == 0 or it == max_iter:
            p = _primal(g, a, M, w_max, reg, s)
            d, u = _dual(g, a, M, reg, ball, w)
            if not ball:
                s_alt = -u / (2.0 * reg)
                p_alt = _primal(g, a, M, w_max, reg, s_alt)
                if p_alt < p:
                    p = p_alt
                    s[:] = s_alt
            if p - d < best_p - best_d:
                best_p, best_d = p, d
                s_best[:] = s
                w_best[:] = w

    s[:] = s_best
    w[:] = w_best
    return it, best_p, best_d
