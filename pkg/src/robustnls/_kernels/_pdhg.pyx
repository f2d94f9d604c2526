# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled primal-dual loop for the composite model subproblems.

Solves

    min_s  g^T s + w_max ||a + M s||_1 + reg ||s||^2      (reg > 0, s free)
    min_s  g^T s + w_max ||a + M s||_1,  ||s|| <= 1       (ball)

through the saddle form with dual ``w`` in the box ``|w_i| <= w_max``.
Must stay arithmetically in step with ``_pdhg_py.pdhg``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


cdef inline double _clip(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef double _primal(const double[::1] g, const double[::1] a, const double[:, ::1] M,
                    double w_max, double reg, const double[::1] s) nogil:
    cdef Py_ssize_t r = M.shape[0], n = M.shape[1], i, j
    cdef double val = 0.0, l1 = 0.0, sq = 0.0, z
    for j in range(n):
        val += g[j] * s[j]
        sq += s[j] * s[j]
    for i in range(r):
        z = a[i]
        for j in range(n):
            z += M[i, j] * s[j]
        l1 += fabs(z)
    return val + w_max * l1 + reg * sq


cdef double _dual(const double[::1] g, const double[::1] a, const double[:, ::1] M,
                  double reg, bint ball, const double[::1] w, double[::1] u) nogil:
    # u <- g + M^T w
    cdef Py_ssize_t r = M.shape[0], n = M.shape[1], i, j
    cdef double aw = 0.0, nrm = 0.0
    for j in range(n):
        u[j] = g[j]
    for i in range(r):
        aw += a[i] * w[i]
        for j in range(n):
            u[j] += M[i, j] * w[i]
    for j in range(n):
        nrm += u[j] * u[j]
    if ball:
        return aw - sqrt(nrm)
    return aw - nrm / (4.0 * reg)


def pdhg(const double[::1] g, const double[::1] a, const double[:, ::1] M,
         double w_max, double reg, bint ball, double tau, double sig,
         double[::1] s, double[::1] w, long max_iter, long check_every, double tol):
    """Run the primal-dual iteration in place on ``s`` and ``w``.

    On return ``s`` and ``w`` hold the best certified pair seen at a check.

    Returns
    -------
    (iterations, primal, dual)
    """
    cdef Py_ssize_t r = M.shape[0], n = M.shape[1], i, j
    cdef long it = 0
    cdef double[::1] s_new = np.empty(n)
    cdef double[::1] sbar = np.empty(n)
    cdef double[::1] u = np.empty(n)
    cdef double[::1] s_alt = np.empty(n)
    cdef double[::1] s_best = np.array(s, copy=True)
    cdef double[::1] w_best = np.array(w, copy=True)
    cdef double t, nrm, z, p, p_alt, d
    cdef double best_p, best_d
    cdef double shrink = 1.0 / (1.0 + 2.0 * tau * reg)

    best_p = _primal(g, a, M, w_max, reg, s)
    best_d = _dual(g, a, M, reg, ball, w, u)

    with nogil:
        while it < max_iter and best_p - best_d > tol:
            # primal step: s_new = prox(s - tau (g + M^T w))
            for j in range(n):
                t = g[j]
                for i in range(r):
                    t += M[i, j] * w[i]
                s_new[j] = s[j] - tau * t
            if ball:
                nrm = 0.0
                for j in range(n):
                    nrm += s_new[j] * s_new[j]
                nrm = sqrt(nrm)
                if nrm > 1.0:
                    for j in range(n):
                        s_new[j] = s_new[j] / nrm
            else:
                for j in range(n):
                    s_new[j] = s_new[j] * shrink
            for j in range(n):
                sbar[j] = 2.0 * s_new[j] - s[j]
                s[j] = s_new[j]
            # dual step: w = clip(w + sig (a + M sbar))
            for i in range(r):
                z = a[i]
                for j in range(n):
                    z += M[i, j] * sbar[j]
                w[i] = _clip(w[i] + sig * z, -w_max, w_max)
            it += 1

            if it % check_every == 0 or it == max_iter:
                p = _primal(g, a, M, w_max, reg, s)
                d = _dual(g, a, M, reg, ball, w, u)
                if not ball:
                    for j in range(n):
                        s_alt[j] = -u[j] / (2.0 * reg)
                    p_alt = _primal(g, a, M, w_max, reg, s_alt)
                    if p_alt < p:
                        p = p_alt
                        for j in range(n):
                            s[j] = s_alt[j]
                if p - d < best_p - best_d:
                    best_p = p
                    best_d = d
                    for j in range(n):
                        s_best[j] = s[j]
                    for i in range(r):
                        w_best[i] = w[i]

    for j in range(n):
        s[j] = s_best[j]
    for i in range(r):
        w[i] = w_best[i]
    return it, best_p, best_d
