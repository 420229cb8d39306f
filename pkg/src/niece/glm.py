"""L1-penalized logistic and Cox estimators and unpenalized refits.

Objectives are ``(1/n) * loss + lam * ||beta||_1``. Penalized fits run
proximal-Newton style: a quadratic model of the loss (IRLS weights for
logistic, diagonal risk-set weights for Cox) is minimized by weighted-lasso
coordinate descent, then a step-halving line search keeps the objective
non-increasing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._backend import kernels

ETA_CLIP = 30.0  # |eta| beyond which log1p(exp) switches to its asymptote
DIVERGE = 1e3


class GlmError(ValueError):
    pass


@dataclass
class GlmFit:
    beta: np.ndarray
    intercept: float
    lam: float
    objective: float
    iterations: int
    converged: bool
    kkt: float = 0.0
    history: list = field(default_factory=list, repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta)


def _check_binary(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if not np.all((y == 0) | (y == 1)):
        raise GlmError("logistic response must be coded 0/1")
    return y


def _log1pexp(eta):
    # log(1 + e^eta) without overflow
    out = np.where(eta > ETA_CLIP, eta, np.log1p(np.exp(np.minimum(eta, ETA_CLIP))))
    return np.where(eta < -ETA_CLIP, np.exp(np.maximum(eta, -700.0)), out)


def logistic_nll(beta, intercept, X, y):
    """Mean negative log-likelihood of a logistic model and its gradient.

    Returns ``(value, grad_beta, grad_intercept)``.
    """
    X = np.asarray(X, dtype=float)
    y = _check_binary(y)
    beta = np.asarray(beta, dtype=float)
    n = X.shape[0]
    eta = intercept + X @ beta
    value = float(np.mean(_log1pexp(eta) - y * eta))
    resid = expit(eta) - y
    return value, X.T @ resid / n, float(resid.mean())


def _check_survival(T, delta):
    T = np.asarray(T, dtype=float).ravel()
    delta = np.asarray(delta, dtype=float).ravel()
    if T.shape != delta.shape:
        raise GlmError("time and event vectors differ in length")
    if not np.all(T > 0):
        raise GlmError("survival times must be positive")
    if not np.all((delta == 0) | (delta == 1)):
        raise GlmError("event indicator must be coded 0/1")
    if not np.any(delta == 1):
        raise GlmError("no events: every observation is censored")
    return T, delta


class _RiskSets:
    """Breslow risk-set bookkeeping for one sample, sorted once by time."""

    def __init__(self, T, delta):
        self.order = np.argsort(T, kind="stable")
        Ts = T[self.order]
        self.delta = delta[self.order]
        # first / last position of each tie group in sorted order
        self.first = np.searchsorted(Ts, Ts, side="left")
        self.last = np.searchsorted(Ts, Ts, side="right") - 1
        self.n = T.shape[0]

    def rev_cumsum(self, a):
        """``sum_{j: T_j >= T_i} a_j`` for every sorted position i."""
        cs = np.cumsum(a[::-1], axis=0)[::-1]
        return cs[self.first]

    def fwd_cumsum(self, a):
        """``sum_{i: T_i <= T_k} a_i`` for every sorted position k."""
        return np.cumsum(a, axis=0)[self.last]


def _cox_parts(eta_s, rs: _RiskSets):
    m = eta_s.max()
    e = np.exp(eta_s - m)
    S0 = rs.rev_cumsum(e)
    value = -np.sum(rs.delta * (eta_s - m - np.log(S0))) / rs.n
    return value, e, S0


def cox_neg_partial_loglik(beta, X, T, delta):
    """Mean negative Cox partial log-likelihood (Breslow ties) and gradient."""
    X = np.asarray(X, dtype=float)
    T, delta = _check_survival(T, delta)
    rs = _RiskSets(T, delta)
    Xs = X[rs.order]
    eta = Xs @ np.asarray(beta, dtype=float)
    value, e, S0 = _cox_parts(eta, rs)
    S1 = rs.rev_cumsum(e[:, None] * Xs)
    grad = -(rs.delta[:, None] * (Xs - S1 / S0[:, None])).sum(axis=0) / rs.n
    return float(value), grad


def _kkt(grad, beta, lam):
    g = np.where(beta != 0, np.abs(grad + lam * np.sign(beta)), np.maximum(np.abs(grad) - lam, 0.0))
    return float(g.max()) if g.size else 0.0


def _prox_newton(lam, loss, model_step, beta, b0, intercept, tol, max_iters):
    """Shared outer loop.

    ``loss(beta, b0) -> (value, grad, grad_b0)``; ``model_step(beta, b0)``
    returns the minimizer ``(beta, b0)`` of the penalized quadratic model,
    which becomes the search direction for a step-halving line search.
    """
    value, grad, gb = loss(beta, b0)
    obj = value + lam * np.abs(beta).sum()
    history = [obj]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        new_beta, new_b0 = model_step(beta, b0)
        step = 1.0
        for _ in range(60):
            cand = beta + step * (new_beta - beta)
            cand_b0 = b0 + step * (new_b0 - b0)
            cv, cg, cgb = loss(cand, cand_b0)
            cobj = cv + lam * np.abs(cand).sum()
            if cobj <= obj + 1e-13 * max(1.0, abs(obj)):
                break
            step *= 0.5
        else:
            cand, cand_b0, cv, cg, cgb, cobj = beta, b0, value, grad, gb, obj
        rel = abs(obj - cobj) / max(1.0, abs(cobj))
        beta, b0, value, grad, gb, obj = cand, cand_b0, cv, cg, cgb, cobj
        history.append(obj)
        kkt = max(_kkt(grad, beta, lam), abs(gb) if intercept else 0.0)
        if (rel < tol and kkt <= 1e-6) or kkt <= 1e-9:
            converged = True
            break
    kkt = max(_kkt(grad, beta, lam), abs(gb) if intercept else 0.0)
    return beta, b0, obj, it, converged, kkt, history


def logistic_lambda_max(X, y) -> float:
    X = np.asarray(X, dtype=float)
    y = _check_binary(y)
    Xc = X - X.mean(axis=0)
    return float(np.max(np.abs(Xc.T @ (y - y.mean()))) / X.shape[0])


def lasso_logistic(X, y, lam: float, tol: float = 1e-10, max_iters: int = 200,
                   beta0=None) -> GlmFit:
    """L1-penalized logistic regression with an unpenalized intercept."""
    X = np.asarray(X, dtype=float)
    y = _check_binary(y)
    n, p = X.shape
    if n < 2:
        raise GlmError("need at least 2 observations")
    if y.min() == y.max():
        raise GlmError("logistic response has a single class")
    if lam < 0:
        raise GlmError("lambda must be non-negative")
    mu = X.mean(axis=0)
    Xc = X - mu
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    ybar = y.mean()
    b0 = float(np.log(ybar / (1 - ybar)))

    def loss(b, c0):
        return logistic_nll(b, c0, Xc, y)

    Xf = np.asfortranarray(Xc)

    def model_step(b, c0):
        eta = c0 + Xc @ b
        prob = expit(eta)
        w = np.maximum(prob * (1 - prob), 1e-5)
        r = (y - prob) / w
        b = b.copy()
        c0, _, _ = kernels.wlasso_cd(Xf, w, r, b, c0, lam, True, 1e-14, 100000)
        return b, c0

    beta, b0, obj, it, conv, kkt, hist = _prox_newton(lam, loss, model_step, beta, b0, True, tol, max_iters)
    return GlmFit(beta=beta, intercept=float(b0 - mu @ beta), lam=lam, objective=float(obj),
                  iterations=it, converged=conv, kkt=kkt, history=hist)


def cox_lambda_max(X, T, delta) -> float:
    _, g = cox_neg_partial_loglik(np.zeros(np.asarray(X).shape[1]), X, T, delta)
    return float(np.max(np.abs(g)))


def lasso_cox(X, T, delta, lam: float, tol: float = 1e-10, max_iters: int = 200,
              beta0=None) -> GlmFit:
    """L1-penalized Cox regression (Breslow ties, no intercept)."""
    X = np.asarray(X, dtype=float)
    T, delta = _check_survival(T, delta)
    if lam < 0:
        raise GlmError("lambda must be non-negative")
    n, p = X.shape
    rs = _RiskSets(T, delta)
    # work in time order; centering leaves the partial likelihood unchanged
    Xs = X[rs.order]
    Xs = Xs - Xs.mean(axis=0)
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    Xf = np.asfortranarray(Xs)

    def parts(b):
        eta = Xs @ b
        value, e, S0 = _cox_parts(eta, rs)
        M = rs.rev_cumsum(e[:, None] * Xs) / S0[:, None]
        grad = -(rs.delta[:, None] * (Xs - M)).sum(axis=0) / n
        return value, grad, e, S0, M

    def loss(b, _c0):
        value, grad, *_ = parts(b)
        return value, grad, 0.0

    def model_step(b, _c0):
        _, grad, e, S0, M = parts(b)
        # exact Hessian (Xs^T diag(e a1) Xs - M^T diag(delta) M) / n, kept factored
        a1 = rs.fwd_cumsum(rs.delta / S0)
        b = b.copy()
        kernels.lowrank_lasso_cd(Xf, e * a1 / n, np.asfortranarray(M), rs.delta / n, grad, b,
                                 lam, 1e-12, 100000)
        return b, 0.0

    beta, _, obj, it, conv, kkt, hist = _prox_newton(lam, loss, model_step, beta, 0.0, False, tol, max_iters)
    return GlmFit(beta=beta, intercept=0.0, lam=lam, objective=float(obj), iterations=it,
                  converged=conv, kkt=kkt, history=hist)


def _full_rank(Z):
    s = np.linalg.svd(Z - Z.mean(axis=0), compute_uv=False)
    if s.size and s[-1] <= 1e-10 * s[0]:
        raise GlmError("reduced design is rank deficient")


def _refit_logistic(Z, y, tol):
    n, u = Z.shape
    A = np.column_stack([np.ones(n), Z])
    theta = np.zeros(u + 1)
    ybar = y.mean()
    theta[0] = np.log(ybar / (1 - ybar))

    def nll(t):
        eta = A @ t
        return float(np.mean(_log1pexp(eta) - y * eta))

    f = nll(theta)
    for _ in range(200):
        prob = expit(A @ theta)
        g = A.T @ (prob - y) / n
        H = (A * (prob * (1 - prob))[:, None]).T @ A / n
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise GlmError("singular logistic Hessian; try a smaller u") from exc
        t = 1.0
        while t > 1e-10:
            cand = theta - t * step
            fc = nll(cand)
            if fc <= f + 1e-15:
                break
            t *= 0.5
        theta, f_old, f = cand, f, fc
        if np.linalg.norm(theta[1:]) > DIVERGE:
            raise GlmError("logistic refit diverges (separable data); try a smaller u")
        if np.max(np.abs(t * step)) < tol or abs(f_old - f) < tol * 1e-4:
            break
    return theta[1:], float(theta[0])


def _refit_cox(Z, T, delta, tol):
    n, u = Z.shape
    rs = _RiskSets(T, delta)
    Zs = Z[rs.order]
    Zs = Zs - Zs.mean(axis=0)
    eta_coef = np.zeros(u)

    def parts(b):
        eta = Zs @ b
        value, e, S0 = _cox_parts(eta, rs)
        S1 = rs.rev_cumsum(e[:, None] * Zs)
        S2 = rs.rev_cumsum(e[:, None, None] * Zs[:, :, None] * Zs[:, None, :])
        mean = S1 / S0[:, None]
        grad = -(rs.delta[:, None] * (Zs - mean)).sum(axis=0) / n
        cov = S2 / S0[:, None, None] - mean[:, :, None] * mean[:, None, :]
        H = (rs.delta[:, None, None] * cov).sum(axis=0) / n
        return value, grad, H

    f, g, H = parts(eta_coef)
    for _ in range(200):
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise GlmError("singular Cox information matrix; try a smaller u") from exc
        t = 1.0
        while t > 1e-10:
            cand = eta_coef - t * step
            fc = parts(cand)[0]
            if fc <= f + 1e-15:
                break
            t *= 0.5
        eta_coef = cand
        f_old = f
        f, g, H = parts(eta_coef)
        if np.linalg.norm(eta_coef) > DIVERGE:
            raise GlmError("Cox refit diverges; try a smaller u")
        if np.max(np.abs(t * step)) < tol or abs(f_old - f) < tol * 1e-4:
            break
    return eta_coef


def refit_unpenalized(kind: str, Z, response, tol: float = 1e-8):
    """Unpenalized fit on a reduced design ``Z`` (n x u).

    ``kind`` is "linear" (response n x q), "logistic" (0/1 vector) or "cox"
    (a ``(T, delta)`` pair). Returns ``(coef, intercept)``; ``coef`` is
    u x q for linear, length u otherwise, and the Cox intercept is 0.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    n, u = Z.shape
    if u > n - 2:
        raise GlmError(f"reduced dimension u={u} too large for n={n}")
    _full_rank(Z)
    if kind == "linear":
        Y = np.asarray(response, dtype=float)
        vec = Y.ndim == 1
        Y = Y[:, None] if vec else Y
        zm, ym = Z.mean(axis=0), Y.mean(axis=0)
        coef, *_ = np.linalg.lstsq(Z - zm, Y - ym, rcond=None)
        icpt = ym - zm @ coef
        return (coef[:, 0], float(icpt[0])) if vec else (coef, icpt)
    if kind == "logistic":
        y = _check_binary(response)
        if y.min() == y.max():
            raise GlmError("logistic response has a single class")
        return _refit_logistic(Z, y, tol)
    if kind == "cox":
        T, delta = _check_survival(*response)
        return _refit_cox(Z, T, delta, tol), 0.0
    raise GlmError(f"unknown refit kind {kind!r}")
