# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: L1-constrained unit-vector projection, the PMD
alternation and lasso coordinate descent.

Must stay numerically in step with ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

# status codes shared with the fallback
ST_INACTIVE = 0
ST_ACTIVE = 1
ST_ZERO = 2
ST_SUBUNIT = 3

cdef enum:
    ST_INACTIVE_C = 0
    ST_ACTIVE_C = 1
    ST_ZERO_C = 2
    ST_SUBUNIT_C = 3


cdef inline double _soft_norms(const double* w, Py_ssize_t p, double delta, double* l1) noexcept nogil:
    cdef Py_ssize_t i
    cdef double a, s1 = 0.0, s2 = 0.0
    for i in range(p):
        a = fabs(w[i]) - delta
        if a > 0.0:
            s1 += a
            s2 += a * a
    l1[0] = s1
    return sqrt(s2)


cdef double _polish(const double* w, Py_ssize_t p, double c, double hi) noexcept nogil:
    """Exact threshold for the support selected by bisection, if consistent."""
    cdef Py_ssize_t i
    cdef double a, s1 = 0.0, s2 = 0.0, amin_in = 1e308, amax_out = 0.0
    cdef double k = 0.0, c2 = c * c, qa, qb, qc, disc, r, best = hi
    cdef int j
    for i in range(p):
        a = fabs(w[i])
        if a > hi:
            k += 1.0
            s1 += a
            s2 += a * a
            if a < amin_in:
                amin_in = a
        elif a > amax_out:
            amax_out = a
    qa = k * (k - c2)
    qb = -2.0 * s1 * (k - c2)
    qc = s1 * s1 - c2 * s2
    if k == 0.0 or qa == 0.0:
        return hi
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return hi
    for j in range(2):
        r = (-qb + (sqrt(disc) if j == 0 else -sqrt(disc))) / (2.0 * qa)
        if amax_out <= r < amin_in and s1 - k * r > 0.0:
            best = r
    return best


cdef int _stu(const double* w, Py_ssize_t p, double c, double tol, int max_iter,
              double* v) noexcept nogil:
    """Write the maximizer of ``w @ v`` over the L1/L2 ball into ``v``; return status."""
    cdef Py_ssize_t i
    cdef double nw = 0.0, l1 = 0.0, amax = 0.0, a, lo, hi, mid, ns, ratio
    cdef int it, k
    for i in range(p):
        a = fabs(w[i])
        nw += a * a
        l1 += a
        if a > amax:
            amax = a
    nw = sqrt(nw)
    if nw == 0.0:
        for i in range(p):
            v[i] = 0.0
        return ST_ZERO_C
    if l1 / nw <= c:
        for i in range(p):
            v[i] = w[i] / nw
        return ST_INACTIVE_C
    lo = 0.0
    hi = amax
    for it in range(max_iter):
        mid = 0.5 * (lo + hi)
        ns = _soft_norms(w, p, mid, &l1)
        if ns == 0.0:
            hi = mid
            continue
        ratio = l1 / ns
        if ratio > c:
            lo = mid
        else:
            hi = mid
            if ratio >= c - tol:
                break
    ns = _soft_norms(w, p, hi, &l1)
    if ns == 0.0:
        # tied maxima: the optimum spreads the budget c evenly, ||v||_2 < 1
        k = 0
        for i in range(p):
            if fabs(w[i]) == amax:
                k += 1
        for i in range(p):
            v[i] = 0.0
            if fabs(w[i]) == amax:
                v[i] = (c / k) if w[i] > 0 else -(c / k)
        return ST_SUBUNIT_C
    hi = _polish(w, p, c, hi)
    ns = _soft_norms(w, p, hi, &l1)
    for i in range(p):
        a = fabs(w[i]) - hi
        v[i] = 0.0
        if a > 0.0:
            v[i] = (a if w[i] > 0 else -a) / ns
    return ST_ACTIVE_C


def soft_threshold_unit(const double[::1] w, double c, double tol=1e-8, int max_iter=60):
    """Maximize ``w @ v`` over ``||v||_2 <= 1, ||v||_1 <= c``; returns (v, status)."""
    cdef Py_ssize_t p = w.shape[0]
    out = np.zeros(p, dtype=np.float64)
    cdef double[::1] v = out
    cdef int status
    if p == 0:
        return out, ST_ZERO
    with nogil:
        status = _stu(&w[0], p, c, tol, max_iter, &v[0])
    return out, status


cdef inline double _nrm2(const double* x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += x[i] * x[i]
    return sqrt(s)


cdef inline void _matvec(const double* X, int n, int p, const double* v, double* out) noexcept nogil:
    # X is C-ordered n x p, i.e. Fortran p x n; out = X @ v
    cdef char tr = b'T'
    cdef double one = 1.0, zero = 0.0
    cdef int inc = 1
    dgemv(&tr, &p, &n, &one, <double*>X, &p, <double*>v, &inc, &zero, out, &inc)


cdef inline void _rmatvec(const double* X, int n, int p, const double* u, double* out) noexcept nogil:
    # out = X^T @ u
    cdef char nt = b'N'
    cdef double one = 1.0, zero = 0.0
    cdef int inc = 1
    dgemv(&nt, &p, &n, &one, <double*>X, &p, <double*>u, &inc, &zero, out, &inc)


def pmd_alternate(const double[:, ::1] X, const double[::1] v0, double c, double rel_tol,
                  double v_tol, double bisect_tol, int bisect_max, int max_iter):
    """Alternating updates ``u = Xv/||Xv||``, ``v = S(X^T u)`` from ``v0``.

    Returns ``(u, v, trace, iterations, converged, status)``; ``u`` and ``v``
    are None when a zero vector appears.
    """
    cdef int n = X.shape[0], p = X.shape[1]
    u_arr = np.empty(n)
    v_arr = np.array(v0, dtype=np.float64)
    vn_arr = np.empty(p)
    xv_arr = np.empty(n)
    w_arr = np.empty(p)
    trace_arr = np.empty(max_iter)
    cdef double[::1] u = u_arr, v = v_arr, vn = vn_arr, xv = xv_arr, w = w_arr, tr = trace_arr
    cdef double nxv, sigma = 0.0, sigma_old = 0.0, dv, d
    cdef int it = 0, status = -1, i, done = 0
    cdef bint have_old = False
    with nogil:
        _matvec(&X[0, 0], n, p, &v[0], &xv[0])
        for it in range(1, max_iter + 1):
            nxv = _nrm2(&xv[0], n)
            if nxv == 0.0:
                done = 2
                break
            for i in range(n):
                u[i] = xv[i] / nxv
            _rmatvec(&X[0, 0], n, p, &u[0], &w[0])
            status = _stu(&w[0], p, c, bisect_tol, bisect_max, &vn[0])
            if status == ST_ZERO_C:
                done = 2
                break
            _matvec(&X[0, 0], n, p, &vn[0], &xv[0])
            sigma = 0.0
            for i in range(n):
                sigma += u[i] * xv[i]
            tr[it - 1] = sigma
            dv = 0.0
            for i in range(p):
                d = vn[i] - v[i]
                dv += d * d
                v[i] = vn[i]
            dv = sqrt(dv)
            if have_old and fabs(sigma - sigma_old) <= rel_tol * fabs(sigma) and dv <= v_tol:
                done = 1
                break
            sigma_old = sigma
            have_old = True
    if done == 2:
        return None, None, list(trace_arr[:it - 1]), it, False, status
    if done == 1:
        return u_arr, v_arr, list(trace_arr[:it]), it, True, status
    return u_arr, v_arr, list(trace_arr[:max_iter]), max_iter, False, status


cdef inline double _soft(double z, double t) noexcept nogil:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


cdef double _sweep(const double[::1, :] X, const double[:] w, double[:] r,
                   double[:] beta, const double[:] xwx, double lam, double n,
                   const unsigned char[:] use, unsigned char[:] active) noexcept nogil:
    """One cyclic pass over columns flagged in ``use``; returns max weighted change."""
    cdef Py_ssize_t i, j, nn = X.shape[0], p = X.shape[1]
    cdef double g, old, new, diff, dmax = 0.0
    for j in range(p):
        if not use[j] or xwx[j] <= 0.0:
            continue
        g = 0.0
        for i in range(nn):
            g += X[i, j] * w[i] * r[i]
        g = g / n
        old = beta[j]
        new = _soft(g + xwx[j] * old, lam) / xwx[j]
        if new != old:
            diff = new - old
            for i in range(nn):
                r[i] -= diff * X[i, j]
            beta[j] = new
            diff = xwx[j] * diff * diff
            if diff > dmax:
                dmax = diff
        if new != 0.0:
            active[j] = 1
    return dmax


cdef double _intercept(const double[:] w, double[:] r, double* b0) noexcept nogil:
    cdef Py_ssize_t i, nn = w.shape[0]
    cdef double sw = 0.0, swr = 0.0, step
    for i in range(nn):
        sw += w[i]
        swr += w[i] * r[i]
    if sw <= 0.0:
        return 0.0
    step = swr / sw
    for i in range(nn):
        r[i] -= step
    b0[0] += step
    return step * step * sw / nn


def wlasso_cd(const double[::1, :] X, const double[:] w, double[:] r, double[:] beta,
              double b0, double lam, bint intercept, double tol=1e-10, int max_sweeps=10000):
    """Weighted lasso by cyclic coordinate descent with an active-set loop.

    Minimizes ``(1/2n) sum_i w_i r_i^2 + lam * ||beta||_1`` where ``r`` is the
    working residual, updated in place together with ``beta``.
    Returns ``(b0, sweeps, converged)``.
    """
    cdef Py_ssize_t j, p = X.shape[1]
    cdef double n = X.shape[0]
    cdef double dmax, db
    cdef int sweeps = 0
    cdef bint converged = False
    xwx_arr = np.empty(p, dtype=np.float64)
    cdef double[:] xwx = xwx_arr
    cdef Py_ssize_t i
    cdef double s
    all_arr = np.ones(p, dtype=np.uint8)
    act_arr = np.zeros(p, dtype=np.uint8)
    cdef unsigned char[:] use_all = all_arr
    cdef unsigned char[:] active = act_arr
    with nogil:
        for j in range(p):
            s = 0.0
            for i in range(X.shape[0]):
                s += w[i] * X[i, j] * X[i, j]
            xwx[j] = s / n
            if beta[j] != 0.0:
                active[j] = 1
        while sweeps < max_sweeps:
            dmax = _sweep(X, w, r, beta, xwx, lam, n, use_all, active)
            if intercept:
                db = _intercept(w, r, &b0)
                if db > dmax:
                    dmax = db
            sweeps += 1
            if dmax < tol:
                converged = True
                break
            while sweeps < max_sweeps:
                dmax = _sweep(X, w, r, beta, xwx, lam, n, active, active)
                if intercept:
                    db = _intercept(w, r, &b0)
                    if db > dmax:
                        dmax = db
                sweeps += 1
                if dmax < tol:
                    break
    return b0, sweeps, converged


def lowrank_lasso_cd(const double[::1, :] A, const double[:] wa, const double[::1, :] B,
                     const double[:] wb, const double[:] g, double[:] beta, double lam,
                     double tol=1e-14, int max_sweeps=10000):
    """Coordinate descent on ``g^T D + D^T H D / 2 + lam * ||beta||_1`` with
    ``H = A^T diag(wa) A - B^T diag(wb) B`` kept in factored form and
    ``D = beta - beta_start``; ``beta`` is updated in place.

    Returns ``(sweeps, converged)``.
    """
    cdef Py_ssize_t i, j, n = A.shape[0], p = A.shape[1]
    cdef double old, new, diff, dmax, hjj, gj
    cdef int sweeps = 0
    cdef bint converged = False, full
    ra_arr = np.zeros(n, dtype=np.float64)
    rb_arr = np.zeros(n, dtype=np.float64)
    h_arr = np.empty(p, dtype=np.float64)
    act_arr = np.zeros(p, dtype=np.uint8)
    cdef double[:] ra = ra_arr, rb = rb_arr, h = h_arr
    cdef unsigned char[:] active = act_arr
    with nogil:
        for j in range(p):
            hjj = 0.0
            for i in range(n):
                hjj += wa[i] * A[i, j] * A[i, j] - wb[i] * B[i, j] * B[i, j]
            h[j] = hjj
            if beta[j] != 0.0:
                active[j] = 1
        full = True
        while sweeps < max_sweeps:
            dmax = 0.0
            for j in range(p):
                if not full and not active[j]:
                    continue
                hjj = h[j]
                if hjj <= 0.0:
                    continue
                gj = g[j]
                for i in range(n):
                    gj += wa[i] * A[i, j] * ra[i] - wb[i] * B[i, j] * rb[i]
                old = beta[j]
                new = _soft(hjj * old - gj, lam) / hjj
                if new != old:
                    diff = new - old
                    for i in range(n):
                        ra[i] += A[i, j] * diff
                        rb[i] += B[i, j] * diff
                    beta[j] = new
                    diff = hjj * diff * diff
                    if diff > dmax:
                        dmax = diff
                if new != 0.0:
                    active[j] = 1
            sweeps += 1
            if dmax < tol:
                if full:
                    converged = True
                    break
                full = True
            else:
                full = False
    return sweeps, converged
