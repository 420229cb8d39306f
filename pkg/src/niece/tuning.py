"""Cross-validation for the PMD budget ``c``, the lasso ``lambda`` and ``u``.

Folds come from one seeded shuffle; every (fold, grid point) fit is a pure
function of its inputs, so results do not depend on execution order.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import NieceError
from .glm import (GlmError, cox_lambda_max, cox_neg_partial_loglik, lasso_cox, lasso_logistic,
                  logistic_lambda_max, logistic_nll)
from .linalg import LinalgError
from .models import Dataset, EnvelopeFit, ModelError, fit_envelope, predict
from .pmd import PmdError

FIT_ERRORS = (ModelError, GlmError, NieceError, LinalgError, PmdError, np.linalg.LinAlgError)
LINEAR_TASKS = ("response_linear", "predictor_linear", "simultaneous_linear")


class TuningError(ValueError):
    pass


@dataclass
class CvPlan:
    n: int
    folds: int
    assignment: np.ndarray
    grids: dict = field(default_factory=dict)

    def split(self, k):
        test = self.assignment == k
        return np.flatnonzero(~test), np.flatnonzero(test)


@dataclass
class CvResult:
    """Chosen value, the grid and the mean CV loss per grid point (NaN if excluded)."""

    value: float
    grid: np.ndarray
    loss: np.ndarray
    fold_loss: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def lam(self):
        return self.value


def kfold_split(n: int, K: int = 5, seed: int = 0) -> np.ndarray:
    """Balanced fold labels ``0..K-1`` from a seeded permutation."""
    if K < 2:
        raise TuningError(f"need at least 2 folds, got {K}")
    if K > n:
        raise TuningError(f"K={K} folds exceed n={n} observations")
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[perm] = np.arange(n) % K
    return labels


def make_plan(n, K=5, seed=0, **grids) -> CvPlan:
    return CvPlan(n=n, folds=K, assignment=kfold_split(n, K, seed), grids=grids)


def default_c_grid(p: int, size: int = 8) -> np.ndarray:
    return np.geomspace(1.1, np.sqrt(p), size)


def lambda_grid(data: Dataset, task: str, size: int = 20, ratio: float = 0.01) -> np.ndarray:
    if task == "logistic":
        top = logistic_lambda_max(data.X, data.y)
    elif task == "cox":
        top = cox_lambda_max(data.X, data.time, data.event)
    else:
        raise TuningError(f"lambda grids exist for logistic and cox only, not {task!r}")
    if top <= 0:
        raise TuningError("lambda_max is zero: no predictor is associated with the response")
    return np.geomspace(top, ratio * top, size)


def _glm_loss(task, beta, intercept, hold: Dataset):
    if task == "logistic":
        return logistic_nll(beta, intercept, hold.X, hold.y)[0]
    if not np.any(hold.event):
        raise TuningError("holdout fold has no events")
    return cox_neg_partial_loglik(beta, hold.X, hold.time, hold.event)[0]


def cv_loss(task: str, fit: EnvelopeFit, holdout: Dataset) -> float:
    """Held-out loss: mean squared prediction error, mean logistic NLL or
    the Cox partial likelihood on the holdout risk sets."""
    if holdout.n == 0:
        raise TuningError("empty holdout")
    if task in LINEAR_TASKS:
        R = holdout.Y - predict(fit, holdout.X)
        return float(np.mean(np.sum(R * R, axis=1)))
    if task in ("logistic", "cox"):
        return float(_glm_loss(task, fit.beta_env, fit.intercept, holdout))
    raise TuningError(f"unknown task {task!r}")


def _lasso(task, data, lam, beta0=None):
    if task == "logistic":
        return lasso_logistic(data.X, data.y, lam, beta0=beta0, tol=1e-8)
    return lasso_cox(data.X, data.time, data.event, lam, beta0=beta0, tol=1e-8)


def _pick(grid, loss):
    """Index of the smallest finite loss; ties go to the earliest grid point."""
    ok = np.isfinite(loss)
    if not ok.any():
        raise TuningError("every grid point failed in every fold")
    best = np.min(loss[ok])
    return int(np.flatnonzero(ok & (loss == best))[0])


def _mean_over_folds(table, label):
    fold_ok = np.isfinite(table)
    out = np.full(table.shape[1], np.nan)
    for j in range(table.shape[1]):
        if fold_ok[:, j].any():
            out[j] = table[fold_ok[:, j], j].mean()
    if np.any(~fold_ok) and np.any(np.isfinite(out)):
        warnings.warn(f"{int((~fold_ok).sum())} fold fits failed during {label} CV", RuntimeWarning)
    return out


def lasso_path(task, data, grid):
    """Warm-started lasso fits along a decreasing lambda grid."""
    fits, beta = [], None
    for lam in grid:
        f = _lasso(task, data, float(lam), beta)
        fits.append(f)
        beta = f.beta
    return fits


def select_lambda(data: Dataset, task: str | None = None, grid=None, K: int = 5,
                  seed: int = 0, plan: CvPlan | None = None) -> CvResult:
    """Lambda minimizing the cross-validated deviance of the plain lasso.

    Returns the chosen lambda plus, in ``extra["fold_fits"]``, the fold
    paths so later stages can reuse them.
    """
    task = data.kind if task is None else task
    grid = lambda_grid(data, task) if grid is None else np.sort(np.asarray(grid, dtype=float))[::-1]
    plan = make_plan(data.n, K, seed) if plan is None else plan
    table = np.full((plan.folds, grid.size), np.nan)
    for k in range(plan.folds):
        tr, te = plan.split(k)
        train, hold = data.subset(tr), data.subset(te)
        if task == "cox" and not np.any(hold.event):
            warnings.warn(f"fold {k} holdout has no events; skipped", RuntimeWarning)
            continue
        try:
            path = lasso_path(task, train, grid)
        except FIT_ERRORS:
            continue
        for j, f in enumerate(path):
            table[k, j] = _glm_loss(task, f.beta, f.intercept, hold)
    loss = _mean_over_folds(table, "lambda")
    j = _pick(grid, loss)
    return CvResult(value=float(grid[j]), grid=grid, loss=loss, fold_loss=table)


def _fold_pilots(task, data, plan, lam):
    pilots = []
    for k in range(plan.folds):
        tr, _ = plan.split(k)
        try:
            pilots.append(_lasso(task, data.subset(tr), lam))
        except FIT_ERRORS:
            pilots.append(None)
    return pilots


def _cv_fits(data, task, plan, configs, pilots=None):
    """Fold x config loss table; ``configs`` are keyword dicts for fit_envelope."""
    table = np.full((plan.folds, len(configs)), np.nan)
    for k in range(plan.folds):
        tr, te = plan.split(k)
        train, hold = data.subset(tr), data.subset(te)
        if task == "cox" and not np.any(hold.event):
            warnings.warn(f"fold {k} holdout has no events; skipped", RuntimeWarning)
            continue
        extra = {}
        if pilots is not None:
            if pilots[k] is None:
                continue
            extra["pilot"] = pilots[k]
        for j, cfg in enumerate(configs):
            try:
                fit = fit_envelope(train, task, **cfg, **extra)
                table[k, j] = cv_loss(task, fit, hold)
            except FIT_ERRORS:
                pass
    return table


def _resolve_lambda(data, task, lam, plan):
    if task not in ("logistic", "cox"):
        return None
    if lam is None:
        lam = select_lambda(data, task, plan=plan).value
    return float(lam)


def select_c(data: Dataset, task: str, u, d=None, c_grid=None, K: int = 5, seed: int = 0,
             lam: float | None = None, select: str = "score", plan: CvPlan | None = None) -> CvResult:
    """PMD budget minimizing the CV loss of the full sparse pipeline.

    For logistic and Cox tasks lambda is fixed first (plain-lasso CV unless
    given) and each fold reuses one lasso fit across the c grid.
    """
    p = data.Y.shape[1] if task == "response_linear" else data.p
    grid = default_c_grid(p) if c_grid is None else np.asarray(c_grid, dtype=float)
    if grid.size == 0 or np.any(grid < 1) or np.any(grid > np.sqrt(p) * (1 + 1e-12)):
        raise TuningError(f"c grid must be non-empty and inside [1, sqrt({p})]")
    grid = np.sort(grid)
    plan = make_plan(data.n, K, seed) if plan is None else plan
    lam = _resolve_lambda(data, task, lam, plan)
    pilots = _fold_pilots(task, data, plan, lam) if lam is not None else None
    configs = [dict(u=u, d=d, c=float(c), select=select) for c in grid]
    table = _cv_fits(data, task, plan, configs, pilots)
    loss = _mean_over_folds(table, "c")
    j = _pick(grid, loss)
    return CvResult(value=float(grid[j]), grid=grid, loss=loss, fold_loss=table, extra=dict(lam=lam))


def select_u(data: Dataset, task: str, u_grid, K: int = 5, seed: int = 0, c=None,
             lam: float | None = None, select: str = "score", c_grid=None,
             plan: CvPlan | None = None) -> CvResult:
    """Envelope dimension by CV with ``d = min(2u, n - 1, dim)``.

    ``c=None`` uses the dense path; ``c="cv"`` selects c separately at
    every u; a number fixes it.
    """
    grid = np.asarray(sorted(set(int(v) for v in u_grid)))
    if grid.size == 0 or grid[0] < 1:
        raise TuningError("u grid must contain positive integers")
    dim = data.Y.shape[1] if task == "response_linear" else data.p
    plan = make_plan(data.n, K, seed) if plan is None else plan
    lam = _resolve_lambda(data, task, lam, plan)
    pilots = _fold_pilots(task, data, plan, lam) if lam is not None else None
    table = np.full((plan.folds, grid.size), np.nan)
    chosen_c = []
    for j, u in enumerate(grid):
        d = min(2 * u, data.n - 1, dim)
        cu = c
        if isinstance(c, str):
            if c != "cv":
                raise TuningError(f"c must be a number, None or 'cv', got {c!r}")
            try:
                cu = select_c(data, task, int(u), d, c_grid, lam=lam, select=select, plan=plan).value
            except TuningError:
                chosen_c.append(None)
                continue
        chosen_c.append(cu)
        table[:, j] = _cv_fits(data, task, plan, [dict(u=int(u), d=d, c=cu, select=select)], pilots)[:, 0]
    loss = _mean_over_folds(table, "u")
    j = _pick(grid, loss)
    return CvResult(value=int(grid[j]), grid=grid, loss=loss, fold_loss=table,
                    extra=dict(lam=lam, c=chosen_c))
