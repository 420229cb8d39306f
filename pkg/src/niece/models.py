"""Envelope regression models built on NIECE / SNIECE.

Each adapter forms ``(M_hat, U_hat)`` for its task, picks the envelope
basis, refits the working model on the reduced data and maps the
coefficients back to the full space.

Coefficient orientation: linear fits store ``beta_env`` as r x p
(response x predictor), so ``Y ~ intercept + X @ beta_env.T``; logistic and
Cox fits store a length-p vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NieceResult, niece_fit, sniece_fit
from .glm import GlmError, lasso_cox, lasso_logistic, refit_unpenalized
from .linalg import cross_covariance, sample_covariance
from .pmd import PmdConfig

TASKS = ("response_linear", "predictor_linear", "simultaneous_linear", "logistic", "cox")


class ModelError(ValueError):
    pass


@dataclass
class Dataset:
    """Predictors plus exactly one response block.

    ``Y`` for linear tasks (n x r), ``y`` for binary labels, or
    ``time``/``event`` for right-censored survival data.
    """

    X: np.ndarray
    Y: np.ndarray | None = None
    y: np.ndarray | None = None
    time: np.ndarray | None = None
    event: np.ndarray | None = None
    x_names: list | None = None
    y_names: list | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ModelError("X must be a 2-d array")
        n = self.X.shape[0]
        kinds = [self.Y is not None, self.y is not None, self.time is not None]
        if sum(kinds) != 1:
            raise ModelError("provide exactly one response: Y, y or (time, event)")
        if self.Y is not None:
            self.Y = np.asarray(self.Y, dtype=float)
            if self.Y.ndim == 1:
                self.Y = self.Y[:, None]
            blocks = [self.Y]
        elif self.y is not None:
            self.y = np.asarray(self.y, dtype=float).ravel()
            if not np.all((self.y == 0) | (self.y == 1)):
                raise ModelError("binary response must be coded 0/1")
            blocks = [self.y]
        else:
            if self.event is None:
                raise ModelError("survival response needs event indicators")
            self.time = np.asarray(self.time, dtype=float).ravel()
            self.event = np.asarray(self.event, dtype=float).ravel()
            if np.any(self.time <= 0):
                raise ModelError("survival times must be positive")
            if not np.all((self.event == 0) | (self.event == 1)):
                raise ModelError("event indicators must be 0/1")
            blocks = [self.time, self.event]
        for b in blocks:
            if b.shape[0] != n:
                raise ModelError(f"response has {b.shape[0]} rows, X has {n}")
        for b in [self.X, *blocks]:
            if not np.all(np.isfinite(b)):
                raise ModelError("non-finite entries in data")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def kind(self) -> str:
        if self.Y is not None:
            return "linear"
        return "logistic" if self.y is not None else "cox"

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        pick = lambda a: None if a is None else a[idx]
        return Dataset(X=self.X[idx], Y=pick(self.Y), y=pick(self.y), time=pick(self.time),
                       event=pick(self.event), x_names=self.x_names, y_names=self.y_names)


@dataclass
class EnvelopeFit:
    task: str
    basis: np.ndarray                  # Gamma_X for simultaneous fits
    eta: np.ndarray
    beta_env: np.ndarray
    intercept: np.ndarray | float
    hyper: dict
    score_table: object = None
    selection: NieceResult | None = None
    basis_y: np.ndarray | None = None
    selection_y: NieceResult | None = None
    pilot: object = None               # lasso fit behind U_hat for logistic / cox
    x_names: list | None = None
    y_names: list | None = None
    notes: list = field(default_factory=list)

    @property
    def u(self) -> int:
        return self.basis.shape[1]


def _default_d(u, n, dim):
    return min(2 * u, n - 1, dim)


def _check_dims(u, d, n, dim, label):
    if n < 3:
        raise ModelError(f"need n >= 3 observations, got {n}")
    if not 1 <= u <= dim:
        raise ModelError(f"u={u} must lie in [1, {label}={dim}]")
    if not u <= d <= dim:
        raise ModelError(f"d={d} must lie in [u={u}, {label}={dim}]")


def _select(Z, u, d, c, U, u_norm, select, pmd_cfg):
    """Envelope basis of the columns of ``Z`` (n x k) against ``U``.

    Dense path: eigenvectors of the sample covariance of ``Z``. Sparse path:
    PMD of the centered ``Z / sqrt(n)``, whose Gram matrix is that covariance.
    """
    if c is None:
        return niece_fit(sample_covariance(Z), U, u, d, select=select,
                         check_psd=False, u_norm=u_norm)
    n = Z.shape[0]
    Zn = (Z - Z.mean(axis=0)) / np.sqrt(n)
    if d > min(n, Z.shape[1]):
        raise ModelError(f"sparse path needs d <= min(n, dim) = {min(n, Z.shape[1])}")
    cfg = PmdConfig(c=float(c)) if pmd_cfg is None else pmd_cfg
    return sniece_fit(Zn, U, u, d, cfg.c, select=select, cfg=cfg, check_psd=False, u_norm=u_norm)


def _linear_blocks(data):
    if data.kind != "linear":
        raise ModelError("linear envelope needs a matrix response Y")
    return data.X, data.Y


def _linear_ols(X, Y):
    coef, icpt = refit_unpenalized("linear", X, Y)
    return coef.T, icpt                 # r x p, r


def _ols_residuals(X, Y):
    Xc, Yc = X - X.mean(axis=0), Y - Y.mean(axis=0)
    if np.linalg.matrix_rank(Xc) < X.shape[1]:
        raise ModelError("residual covariance needs a full-rank X (p < n)")
    B, *_ = np.linalg.lstsq(Xc, Yc, rcond=None)
    return Yc - Xc @ B


def response_envelope(data: Dataset, u: int, d: int | None = None, c: float | None = None,
                      *, select: str = "score", estimator: str = "constrained",
                      m_hat: str = "marginal", pmd_cfg: PmdConfig | None = None) -> EnvelopeFit:
    """Response envelope: ``M = Sigma_Y``, ``U = Sigma_YX Sigma_XY``.

    ``m_hat="residual"`` uses the error covariance ``Sigma_{Y|X}`` for ``M``
    instead; both have the same population envelope, but the residual form
    ranks its eigenvectors by noise variance alone.
    """
    X, Y = _linear_blocks(data)
    n, r = Y.shape
    d = _default_d(u, n, r) if d is None else d
    _check_dims(u, d, n, r, "r")
    F = cross_covariance(Y, X)                      # r x p
    U = F @ F.T
    if m_hat == "marginal":
        Z = Y
    elif m_hat == "residual":
        Z = _ols_residuals(X, Y)
    else:
        raise ModelError(f"m_hat must be 'marginal' or 'residual', got {m_hat!r}")
    fit = _select(Z, u, d, c, U, np.linalg.norm(F, 2) ** 2, select, pmd_cfg)
    G = fit.basis
    ym, xm = Y.mean(axis=0), X.mean(axis=0)
    if estimator == "constrained":
        eta, _ = _linear_ols(X, Y @ G)                # u x p
        beta = G @ eta
    elif estimator == "projection":
        b_ols, _ = _linear_ols(X, Y)
        beta = G @ (G.T @ b_ols)
        eta = G.T @ b_ols
    else:
        raise ModelError(f"unknown estimator {estimator!r}")
    return EnvelopeFit(task="response_linear", basis=G, eta=eta, beta_env=beta,
                       intercept=ym - beta @ xm, score_table=fit.score_table, selection=fit,
                       hyper=dict(u=u, d=d, c=c, select=select, estimator=estimator, m_hat=m_hat),
                       x_names=data.x_names, y_names=data.y_names, notes=list(fit.warnings))


def predictor_envelope(data: Dataset, u: int, d: int | None = None, c: float | None = None,
                       *, select: str = "score", estimator: str = "constrained",
                       pmd_cfg: PmdConfig | None = None) -> EnvelopeFit:
    """Predictor envelope: ``M = Sigma_X``, ``U = Sigma_XY Sigma_YX``."""
    X, Y = _linear_blocks(data)
    n, p = X.shape
    d = _default_d(u, n, p) if d is None else d
    _check_dims(u, d, n, p, "p")
    G_xy = cross_covariance(X, Y)                   # p x r
    U = G_xy @ G_xy.T
    fit = _select(X, u, d, c, U, np.linalg.norm(G_xy, 2) ** 2, select, pmd_cfg)
    G = fit.basis
    if estimator == "constrained":
        eta_t, icpt = _linear_ols(X @ G, Y)           # r x u
        eta = eta_t.T
        beta = eta_t @ G.T
    elif estimator == "projection":
        b_ols, icpt = _linear_ols(X, Y)
        beta = b_ols @ G @ G.T
        eta = G.T @ b_ols.T
        icpt = Y.mean(axis=0) - beta @ X.mean(axis=0)
    else:
        raise ModelError(f"unknown estimator {estimator!r}")
    return EnvelopeFit(task="predictor_linear", basis=G, eta=eta, beta_env=beta,
                       intercept=icpt, score_table=fit.score_table, selection=fit,
                       hyper=dict(u=u, d=d, c=c, select=select, estimator=estimator),
                       x_names=data.x_names, y_names=data.y_names, notes=list(fit.warnings))


def simultaneous_envelope(data: Dataset, u_x: int, u_y: int, d_x: int | None = None,
                          d_y: int | None = None, c_x: float | None = None,
                          c_y: float | None = None, *, select: str = "score") -> EnvelopeFit:
    """Predictor and response envelopes fitted independently, then one joint refit."""
    X, Y = _linear_blocks(data)
    n, p = X.shape
    r = Y.shape[1]
    d_x = _default_d(u_x, n, p) if d_x is None else d_x
    d_y = _default_d(u_y, n, r) if d_y is None else d_y
    _check_dims(u_x, d_x, n, p, "p")
    _check_dims(u_y, d_y, n, r, "r")
    S_xy = cross_covariance(X, Y)
    nu = np.linalg.norm(S_xy, 2) ** 2
    fx = _select(X, u_x, d_x, c_x, S_xy @ S_xy.T, nu, select, None)
    fy = _select(Y, u_y, d_y, c_y, S_xy.T @ S_xy, nu, select, None)
    Gx, Gy = fx.basis, fy.basis
    eta, _ = _linear_ols(X @ Gx, Y @ Gy)              # u_y x u_x
    beta = Gy @ eta @ Gx.T
    icpt = Y.mean(axis=0) - beta @ X.mean(axis=0)
    return EnvelopeFit(task="simultaneous_linear", basis=Gx, basis_y=Gy, eta=eta, beta_env=beta,
                       intercept=icpt, score_table=fx.score_table, selection=fx, selection_y=fy,
                       hyper=dict(u_x=u_x, u_y=u_y, d_x=d_x, d_y=d_y, c_x=c_x, c_y=c_y, select=select),
                       x_names=data.x_names, y_names=data.y_names,
                       notes=list(fx.warnings) + list(fy.warnings))


def _glm_envelope(task, data, u, d, lam, c, select, pilot, pmd_cfg, lasso_kw):
    X = data.X
    n, p = X.shape
    d = _default_d(u, n, p) if d is None else d
    _check_dims(u, d, n, p, "p")
    response = data.y if task == "logistic" else (data.time, data.event)
    if task == "cox" and not np.any(data.event):
        raise ModelError("no events: every observation is censored")
    if pilot is None:
        if lam is None:
            from .tuning import select_lambda
            lam = select_lambda(data, task).lam
        if task == "logistic":
            pilot = lasso_logistic(X, data.y, lam, **lasso_kw)
        else:
            pilot = lasso_cox(X, data.time, data.event, lam, **lasso_kw)
    b = pilot.beta
    if not np.any(b):
        raise ModelError(f"lasso estimate is identically zero at lambda={pilot.lam:.4g}; use a smaller lambda")
    fit = _select(X, u, d, c, np.outer(b, b), float(b @ b), select, pmd_cfg)
    G = fit.basis
    try:
        eta, icpt = refit_unpenalized(task, X @ G, response)
    except GlmError as exc:
        raise ModelError(str(exc)) from exc
    return EnvelopeFit(task=task, basis=G, eta=eta, beta_env=G @ eta, intercept=icpt,
                       score_table=fit.score_table, selection=fit, pilot=pilot,
                       hyper=dict(u=u, d=d, c=c, lam=pilot.lam, select=select),
                       x_names=data.x_names, y_names=data.y_names, notes=list(fit.warnings))


def logistic_envelope(data: Dataset, u: int, d: int | None = None, lam: float | None = None,
                      c: float | None = None, *, select: str = "score", pilot=None,
                      pmd_cfg: PmdConfig | None = None, **lasso_kw) -> EnvelopeFit:
    """Logistic envelope: ``M = Sigma_X``, ``U = b b^T`` with ``b`` the lasso estimate.

    ``lam=None`` picks lambda by cross-validated lasso deviance; ``pilot``
    reuses an existing lasso fit instead.
    """
    if data.kind != "logistic":
        raise ModelError("logistic envelope needs a binary response y")
    if data.y.min() == data.y.max():
        raise ModelError("binary response has a single class")
    return _glm_envelope("logistic", data, u, d, lam, c, select, pilot, pmd_cfg, lasso_kw)


def cox_envelope(data: Dataset, u: int, d: int | None = None, lam: float | None = None,
                 c: float | None = None, *, select: str = "score", pilot=None,
                 pmd_cfg: PmdConfig | None = None, **lasso_kw) -> EnvelopeFit:
    """Cox envelope: ``M = Sigma_X``, ``U = b b^T`` with ``b`` the lasso Cox estimate."""
    if data.kind != "cox":
        raise ModelError("Cox envelope needs (time, event)")
    return _glm_envelope("cox", data, u, d, lam, c, select, pilot, pmd_cfg, lasso_kw)


def fit_envelope(data: Dataset, task: str, u: int, d: int | None = None, c: float | None = None,
                 lam: float | None = None, **kw) -> EnvelopeFit:
    """Dispatch on ``task``; simultaneous fits take ``u`` as ``(u_x, u_y)``."""
    if task == "response_linear":
        return response_envelope(data, u, d, c, **kw)
    if task == "predictor_linear":
        return predictor_envelope(data, u, d, c, **kw)
    if task == "simultaneous_linear":
        ux, uy = (u, u) if np.isscalar(u) else u
        dx, dy = (d, d) if d is None or np.isscalar(d) else d
        cx, cy = (c, c) if c is None or np.isscalar(c) else c
        return simultaneous_envelope(data, ux, uy, dx, dy, cx, cy, **kw)
    if task == "logistic":
        return logistic_envelope(data, u, d, lam, c, **kw)
    if task == "cox":
        return cox_envelope(data, u, d, lam, c, **kw)
    raise ModelError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}")


def predict(fit: EnvelopeFit, Xnew):
    """Predictions from a fitted envelope model.

    Linear: fitted responses (m x r). Logistic: ``(probabilities, labels)``.
    Cox: linear risk scores ``Xnew @ beta_env``.
    """
    Xnew = np.asarray(Xnew, dtype=float)
    if Xnew.ndim == 1:
        Xnew = Xnew[None, :]
    p = fit.beta_env.shape[-1] if fit.beta_env.ndim == 2 else fit.beta_env.shape[0]
    if Xnew.shape[1] != p:
        raise ModelError(f"Xnew has {Xnew.shape[1]} columns, the fit expects {p}")
    if fit.task in ("response_linear", "predictor_linear", "simultaneous_linear"):
        return fit.intercept + Xnew @ fit.beta_env.T
    eta = Xnew @ fit.beta_env
    if fit.task == "logistic":
        eta = eta + fit.intercept
        prob = np.where(eta >= 0, 1.0 / (1.0 + np.exp(-np.abs(eta))),
                        np.exp(-np.abs(eta)) / (1.0 + np.exp(-np.abs(eta))))
        return prob, (prob >= 0.5).astype(int)
    if fit.task == "cox":
        return eta
    raise ModelError(f"unknown task {fit.task!r}")
