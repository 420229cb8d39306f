"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same algorithms, same stopping rules; used when the extension is not built.
"""
import numpy as np

ST_INACTIVE = 0
ST_ACTIVE = 1
ST_ZERO = 2
ST_SUBUNIT = 3


def _soft_norms(a, delta):
    s = a - delta
    s = s[s > 0.0]
    return s.sum(), np.sqrt(s @ s)


def soft_threshold_unit(w, c, tol=1e-8, max_iter=60):
    w = np.asarray(w, dtype=float)
    a = np.abs(w)
    nw = np.sqrt(a @ a)
    if nw == 0.0:
        return np.zeros_like(w), ST_ZERO
    if a.sum() / nw <= c:
        return w / nw, ST_INACTIVE
    amax = a.max()
    lo, hi = 0.0, amax
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        l1, ns = _soft_norms(a, mid)
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
    _, ns = _soft_norms(a, hi)
    if ns == 0.0:
        tied = a == amax
        v = np.zeros_like(w)
        v[tied] = np.sign(w[tied]) * c / tied.sum()
        return v, ST_SUBUNIT
    hi = _polish(a, c, hi)
    s = np.maximum(a - hi, 0.0)
    return np.sign(w) * s / np.sqrt(s @ s), ST_ACTIVE


def _polish(a, c, hi):
    inside = a > hi
    k = float(inside.sum())
    s1 = a[inside].sum()
    s2 = a[inside] @ a[inside]
    amin_in = a[inside].min() if k else np.inf
    amax_out = a[~inside].max() if k < a.size else 0.0
    c2 = c * c
    qa = k * (k - c2)
    qb = -2.0 * s1 * (k - c2)
    qc = s1 * s1 - c2 * s2
    if k == 0.0 or qa == 0.0:
        return hi
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return hi
    best = hi
    for r in ((-qb + np.sqrt(disc)) / (2.0 * qa), (-qb - np.sqrt(disc)) / (2.0 * qa)):
        if amax_out <= r < amin_in and s1 - k * r > 0.0:
            best = r
    return best


def _sweep(X, w, r, beta, xwx, lam, n, cols, active):
    dmax = 0.0
    for j in cols:
        if xwx[j] <= 0.0:
            continue
        xj = X[:, j]
        g = (xj * w) @ r / n
        old = beta[j]
        z = g + xwx[j] * old
        new = np.sign(z) * max(abs(z) - lam, 0.0) / xwx[j]
        if new != old:
            diff = new - old
            r -= diff * xj
            beta[j] = new
            dmax = max(dmax, xwx[j] * diff * diff)
        if new != 0.0:
            active[j] = True
    return dmax


def _intercept(w, r, b0):
    sw = w.sum()
    if sw <= 0.0:
        return b0, 0.0
    step = (w @ r) / sw
    r -= step
    return b0 + step, step * step * sw / r.shape[0]


def wlasso_cd(X, w, r, beta, b0, lam, intercept, tol=1e-10, max_sweeps=10000):
    n, p = X.shape
    xwx = (w @ (X * X)) / n
    active = beta != 0.0
    all_cols = range(p)
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        dmax = _sweep(X, w, r, beta, xwx, lam, n, all_cols, active)
        if intercept:
            b0, db = _intercept(w, r, b0)
            dmax = max(dmax, db)
        sweeps += 1
        if dmax < tol:
            converged = True
            break
        while sweeps < max_sweeps:
            dmax = _sweep(X, w, r, beta, xwx, lam, n, np.flatnonzero(active), active)
            if intercept:
                b0, db = _intercept(w, r, b0)
                dmax = max(dmax, db)
            sweeps += 1
            if dmax < tol:
                break
    return b0, sweeps, converged


def lowrank_lasso_cd(A, wa, B, wb, g, beta, lam, tol=1e-14, max_sweeps=10000):
    n, p = A.shape
    ra = np.zeros(n)
    rb = np.zeros(n)
    h = wa @ (A * A) - wb @ (B * B)
    active = beta != 0.0
    sweeps = 0
    converged = False
    full = True
    while sweeps < max_sweeps:
        dmax = 0.0
        for j in (range(p) if full else np.flatnonzero(active)):
            hjj = h[j]
            if hjj <= 0.0:
                continue
            aj, bj = A[:, j], B[:, j]
            gj = g[j] + (wa * aj) @ ra - (wb * bj) @ rb
            old = beta[j]
            z = hjj * old - gj
            new = np.sign(z) * max(abs(z) - lam, 0.0) / hjj
            if new != old:
                diff = new - old
                ra += aj * diff
                rb += bj * diff
                beta[j] = new
                dmax = max(dmax, hjj * diff * diff)
            if new != 0.0:
                active[j] = True
        sweeps += 1
        if dmax < tol:
            if full:
                converged = True
                break
            full = True
        else:
            full = False
    return sweeps, converged


def pmd_alternate(X, v0, c, rel_tol, v_tol, bisect_tol, bisect_max, max_iter):
    v = np.array(v0, dtype=float)
    xv = X @ v
    trace = []
    sigma_old = None
    status = -1
    for it in range(1, max_iter + 1):
        nxv = np.sqrt(xv @ xv)
        if nxv == 0.0:
            return None, None, trace, it, False, status
        u = xv / nxv
        v_new, status = soft_threshold_unit(X.T @ u, c, bisect_tol, bisect_max)
        if status == ST_ZERO:
            return None, None, trace, it, False, status
        xv = X @ v_new
        sigma = float(u @ xv)
        trace.append(sigma)
        dv = np.sqrt((v_new - v) @ (v_new - v))
        v = v_new
        if sigma_old is not None and abs(sigma - sigma_old) <= rel_tol * abs(sigma) and dv <= v_tol:
            return u, v, trace, it, True, status
        sigma_old = sigma
    return u, v, trace, max_iter, False, status
