# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics mirror ``_kernels_py`` exactly."""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

# exp(-50) is below double resolution relative to the n diagonal terms
DEF EXP_CUTOFF = 50.0


cdef inline double _sweep(const double[:, ::1] gram, double[::1] resid,
                          double[::1] beta, const Py_ssize_t[::1] order,
                          Py_ssize_t n_order, double lam) noexcept nogil:
    cdef Py_ssize_t a, j, k, p = beta.shape[0]
    cdef double gjj, z, new, delta, dmax = 0.0
    for a in range(n_order):
        j = order[a]
        gjj = gram[j, j]
        if gjj <= 0.0:
            continue
        z = resid[j] + gjj * beta[j]
        if z > lam:
            new = (z - lam) / gjj
        elif z < -lam:
            new = (z + lam) / gjj
        else:
            new = 0.0
        delta = new - beta[j]
        if delta != 0.0:
            beta[j] = new
            for k in range(p):
                resid[k] -= delta * gram[j, k]
            if fabs(delta) > dmax:
                dmax = fabs(delta)
    return dmax


def cd_solve(const double[:, ::1] gram, double[::1] beta, double[::1] resid,
             double lam, double tol, long max_sweeps):
    """Coordinate descent at one penalty, warm-started from ``beta`` in place.

    ``resid`` must hold ``corr - gram @ beta`` and is kept in sync. A full
    sweep is followed by sweeps over the nonzero coefficients until they
    settle, then by another full sweep; the solve is converged when a full
    sweep moves no coefficient by ``tol`` or more.

    Returns ``(sweeps_used, converged)``.
    """
    cdef Py_ssize_t p = gram.shape[0], j, n_active
    cdef long n = 0
    cdef double dmax
    cdef bint converged = False
    full_arr = np.arange(p, dtype=np.intp)
    active_arr = np.empty(p, dtype=np.intp)
    cdef Py_ssize_t[::1] full = full_arr
    cdef Py_ssize_t[::1] active = active_arr
    with nogil:
        while n < max_sweeps:
            dmax = _sweep(gram, resid, beta, full, p, lam)
            n += 1
            if dmax < tol:
                converged = True
                break
            n_active = 0
            for j in range(p):
                if beta[j] != 0.0:
                    active[n_active] = j
                    n_active += 1
            while n < max_sweeps:
                dmax = _sweep(gram, resid, beta, active, n_active, lam)
                n += 1
                if dmax < tol:
                    break
    return n, bool(converged)


def lscv_pair_sums(const double[::1] x_sorted, const double[::1] hs):
    """Pair sums of exp(-d^2/(4h^2)) and exp(-d^2/(2h^2)) over i < j.

    ``x_sorted`` must be ascending and ``hs`` ascending; terms below
    exp(-50) are skipped.
    """
    cdef Py_ssize_t n = x_sorted.shape[0], nh = hs.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double d2, e, hmax2
    a_arr = np.zeros(nh, dtype=np.float64)
    b_arr = np.zeros(nh, dtype=np.float64)
    inv_arr = np.empty(nh, dtype=np.float64)
    cdef double[::1] a = a_arr
    cdef double[::1] b = b_arr
    cdef double[::1] inv4h2 = inv_arr
    if nh == 0:
        return a_arr, b_arr
    for k in range(nh):
        inv4h2[k] = 1.0 / (4.0 * hs[k] * hs[k])
    hmax2 = inv4h2[nh - 1]
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                d2 = x_sorted[j] - x_sorted[i]
                d2 = d2 * d2
                if d2 * hmax2 > EXP_CUTOFF:
                    break
                k = nh - 1
                while k >= 0:
                    if d2 * inv4h2[k] > EXP_CUTOFF:
                        break
                    e = exp(-d2 * inv4h2[k])
                    a[k] += e
                    b[k] += e * e
                    k -= 1
    return a_arr, b_arr
