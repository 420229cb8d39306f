"""Seeded generators for the simulation designs and the error metrics.

Covariance kinds 1-3 describe the ``s x s`` block of correlated relevant
variables; models M1-M4 embed that block in ``p`` dimensions:

* M1  response envelope, ``Y = beta X + eps`` with ``Y`` in R^p
* M2  predictor envelope, ``Y = beta^T X + eps`` with ``X`` in R^p
* M3  logistic regression
* M4  Cox regression, failure ``Exp(rate=exp(beta^T X))``, censoring ``Exp(rate=0.5)``
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import LinalgError, projection_distance
from .models import Dataset

M2_NOISE_SD = {1: 200.0, 2: 20.0, 3: 10.0}
BETA_NORM = 10.0


def make_rng(seed, *keys) -> np.random.Generator:
    """Generator keyed by a master seed and optional stream indices."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def random_orthogonal(k: int, rng) -> np.ndarray:
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix, sign-corrected."""
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    return Q * np.sign(np.diag(R))


def _orthonormal_columns(A: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(A)
    return Q * np.sign(np.diag(R))


def _complement(G: np.ndarray) -> np.ndarray:
    s, u = G.shape
    Q, _ = np.linalg.qr(G, mode="complete")
    return Q[:, u:]


def gen_sigma(kind: int, family: str, s: int = 10, u: int = 3, seed=0,
              rescale: bool | None = None):
    """Envelope-block covariance and its envelope basis.

    ``family`` is "linear" (M1, M2) or "glm" (M3, M4). The glm variants are
    divided by their spectral norm unless ``rescale=False``.
    Returns ``(Sigma, Gamma_s)``.
    """
    if family not in ("linear", "glm"):
        raise ValueError(f"family must be 'linear' or 'glm', got {family!r}")
    if not s >= u >= 1:
        raise ValueError(f"need s >= u >= 1, got s={s}, u={u}")
    rng = make_rng(seed)
    linear = family == "linear"
    if kind == 1:
        if s < u + 1:
            raise ValueError("covariance 1 needs s >= u + 1")
        V = random_orthogonal(s, rng)
        k = np.arange(1, s + 1)
        D = (k + 1.0) ** 3 if linear else 3.0 ** (k + 1)
        Sigma = (V * D) @ V.T
        # the u eigenvectors just below the top one: (v7, v8, v9) for s=10, u=3
        Gamma = V[:, s - 1 - u:s - 1]
    elif kind in (2, 3):
        Gamma = _orthonormal_columns(rng.uniform(0.0, 1.0, size=(s, u)))
        G0 = _complement(Gamma)
        O = random_orthogonal(u, rng)
        k = np.arange(1, u + 1)
        if kind == 2:
            D = (k + 1.0) ** 3 if linear else (k + 1.0) ** 2
            omega0 = np.full(s - u, 1.0 if linear else 0.01)
            if s > u:
                omega0[0] = 50.0
        else:
            D = (k + 1.0) ** 2
            omega0 = np.full(s - u, 0.01)
        Omega = (O * D) @ O.T
        Sigma = Gamma @ Omega @ Gamma.T + (G0 * omega0) @ G0.T
    else:
        raise ValueError(f"covariance kind must be 1, 2 or 3, got {kind!r}")
    Sigma = (Sigma + Sigma.T) / 2
    if rescale if rescale is not None else not linear:
        Sigma = Sigma / np.linalg.norm(Sigma, 2)
    return Sigma, Gamma


@dataclass
class SimTruth:
    Gamma: np.ndarray
    beta: np.ndarray
    Sigma: np.ndarray
    config: dict = field(default_factory=dict)


def _standardized_beta(Gamma: np.ndarray, q: int, rng) -> np.ndarray:
    eta = rng.uniform(0.0, 1.0, size=(Gamma.shape[1], q))
    b = Gamma @ eta
    return BETA_NORM * b / np.linalg.norm(b)


def _block_normal(rng, n, Sigma, p, tail_var):
    s = Sigma.shape[0]
    L = np.linalg.cholesky(Sigma)
    out = np.empty((n, p))
    out[:, :s] = rng.standard_normal((n, s)) @ L.T
    out[:, s:] = np.sqrt(tail_var) * rng.standard_normal((n, p - s))
    return out


def gen_model(model: str, cov_kind: int, n: int = 200, p: int = 400, q: int | None = None,
              seed=0, u: int = 3, s: int = 10):
    """Draw one data set from a simulation design.

    ``q`` is the predictor dimension for M1 (default 10) and the response
    dimension for M2 (default 5); M3 and M4 have a scalar response.
    Returns ``(Dataset, SimTruth)``.
    """
    model = model.upper()
    if model not in ("M1", "M2", "M3", "M4"):
        raise ValueError(f"unknown model {model!r}")
    if model in ("M3", "M4") and q not in (None, 1):
        raise ValueError(f"{model} has a univariate response; q must be 1")
    if p < s:
        raise ValueError(f"p={p} must be at least s={s}")
    rng = make_rng(seed)
    family = "linear" if model in ("M1", "M2") else "glm"
    Sigma, Gs = gen_sigma(cov_kind, family, s, u, rng)
    Gamma = np.zeros((p, u))
    Gamma[:s] = Gs
    cfg = dict(model=model, cov_kind=cov_kind, n=n, p=p, u=u, s=s,
               seed=seed if not isinstance(seed, np.random.Generator) else None)
    if model == "M1":
        q = 10 if q is None else q
        beta = _standardized_beta(Gamma, q, rng)            # p x q (response x predictor)
        xsd = np.sqrt(30.0) if cov_kind == 1 else 1.0
        X = xsd * rng.standard_normal((n, q))
        eps = _block_normal(rng, n, Sigma, p, 1.0)
        Y = X @ beta.T + eps
        data = Dataset(X=X, Y=Y)
    elif model == "M2":
        q = 5 if q is None else q
        beta = _standardized_beta(Gamma, q, rng)            # p x q (predictor x response)
        X = _block_normal(rng, n, Sigma, p, 0.01)
        Y = X @ beta + M2_NOISE_SD[cov_kind] * rng.standard_normal((n, q))
        data = Dataset(X=X, Y=Y)
    else:
        q = 1
        beta = _standardized_beta(Gamma, 1, rng)[:, 0]
        X = _block_normal(rng, n, Sigma, p, 0.01)
        lin = X @ beta
        if model == "M3":
            y = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-lin))).astype(float)
            data = Dataset(X=X, y=y)
        else:
            fail = rng.exponential(size=n) / np.exp(lin)
            cens = rng.exponential(scale=1.0 / 0.5, size=n)
            T = np.minimum(fail, cens)
            event = (fail <= cens).astype(float)
            # exp(-lin) can underflow to an exact zero time
            T = np.maximum(T, np.finfo(float).tiny)
            data = Dataset(X=X, time=T, event=event)
    cfg["q"] = q
    return data, SimTruth(Gamma=Gamma, beta=beta, Sigma=Sigma, config=cfg)


def bartlett_wishart(scale: np.ndarray, dof: int, rng) -> np.ndarray:
    """One Wishart(scale, dof) draw by the Bartlett decomposition."""
    k = scale.shape[0]
    L = np.linalg.cholesky(scale)
    A = np.tril(rng.standard_normal((k, k)), -1)
    A[np.diag_indices(k)] = np.sqrt(rng.chisquare(dof - np.arange(k)))
    LA = L @ A
    W = LA @ LA.T
    return (W + W.T) / 2


def wishart_pair(M, U, dof: int, seed=0):
    """Wishart draws with means ``M`` and ``U`` and ``dof`` degrees of freedom.

    ``U`` may be rank deficient: it is sampled in its column space and
    embedded back, so the draw has the same range as ``U``.
    """
    M = np.asarray(M, dtype=float)
    U = np.asarray(U, dtype=float)
    p = M.shape[0]
    if U.shape != M.shape:
        raise LinalgError("M and U must have the same shape")
    if dof < p:
        raise ValueError(f"degrees of freedom {dof} below dimension {p}")
    rng = make_rng(seed)
    wm = np.linalg.eigvalsh(M)
    if wm[0] <= 0:
        raise LinalgError("M must be positive definite")
    M_hat = bartlett_wishart(M / dof, dof, rng)
    w, Q = np.linalg.eigh((U + U.T) / 2)
    top = max(w[-1], 0.0)
    if w[0] < -1e-10 * max(top, 1.0):
        raise LinalgError("U must be positive semi-definite")
    keep = w > 1e-12 * top if top > 0 else np.zeros_like(w, dtype=bool)
    if not keep.any():
        return M_hat, np.zeros_like(U)
    Qr = Q[:, keep]
    Wr = bartlett_wishart(np.diag(w[keep]) / dof, dof, rng)
    U_hat = Qr @ Wr @ Qr.T
    return M_hat, (U_hat + U_hat.T) / 2


def envelope_population(p: int = 100, u: int = 5, signal: float = 1.0, seed=0,
                        positions=(2, 3, 10, 11, 19), n_big: int = 20, tail: float = 0.05):
    """Population pair ``(M, U)`` with a known envelope.

    ``M`` has eigenvalues ``k^3`` for ``k = 1..n_big`` and ``tail`` beyond;
    the envelope is spanned by the eigenvectors attached to ``positions``
    (1-based ``k``), and ``U = signal * Gamma O diag(1..u) O^T Gamma^T``.
    Returns ``(M, U, Gamma)``.
    """
    if len(positions) != u:
        raise ValueError("need one eigenvector position per envelope dimension")
    rng = make_rng(seed)
    V = random_orthogonal(p, rng)
    lam = np.full(p, tail)
    lam[:n_big] = np.arange(1, n_big + 1, dtype=float) ** 3
    M = (V * lam) @ V.T
    Gamma = V[:, [k - 1 for k in positions]]
    O = random_orthogonal(u, rng)
    Phi = (O * np.arange(1, u + 1, dtype=float)) @ O.T
    U = signal * Gamma @ Phi @ Gamma.T
    return (M + M.T) / 2, (U + U.T) / 2, Gamma


def delta_beta(beta_true, beta_hat) -> float:
    """Frobenius norm of the coefficient error."""
    a = np.asarray(beta_true, dtype=float)
    b = np.asarray(beta_hat, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def delta_gamma(Gamma_true, Gamma_hat, u: int | None = None) -> float:
    """Normalized projection distance ``||P_true - P_hat||_F / sqrt(2u)`` in [0, 1]."""
    A = np.atleast_2d(np.asarray(Gamma_true, dtype=float))
    u = A.shape[1] if u is None else u
    dist = projection_distance(A, Gamma_hat) / np.sqrt(2 * u)
    return float(min(max(dist, 0.0), 1.0 + 1e-10))
