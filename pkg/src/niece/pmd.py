"""Penalized matrix decomposition PMD(., L1).

Sequential rank-one factors ``u^T X^k v`` with an L1 budget on the right
vector, followed by multiplicative deflation ``X^{k+1} = X^k (I - v v^T)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._backend import ST_SUBUNIT, ST_ZERO, kernels
from .linalg import fix_signs


class PmdError(ValueError):
    pass


@dataclass(frozen=True)
class PmdConfig:
    """Budget and iteration controls for PMD.

    ``c`` bounds ``||v||_1``; values in ``[1, sqrt(p)]`` are meaningful.
    Alternation stops once the relative change of sigma is below ``rel_tol``
    and the step in ``v`` is below ``v_tol``. ``init`` picks the starting
    ``v``: the leading right singular vector of the current matrix ("svd")
    or its normalized column norms ("colnorm").
    """

    c: float
    max_alt_iters: int = 1000
    rel_tol: float = 1e-6
    v_tol: float = 1e-6
    bisect_tol: float = 1e-8
    bisect_max: int = 60
    init: str = "svd"

    def __post_init__(self):
        if not self.c >= 1.0:
            raise PmdError(f"L1 budget c must be >= 1, got {self.c}")
        if min(self.rel_tol, self.v_tol, self.bisect_tol) <= 0 or self.max_alt_iters < 1:
            raise PmdError("tolerances and iteration counts must be positive")


@dataclass
class PmdFactor:
    """One sparse rank-one factor ``sigma * u v^T``."""

    v: np.ndarray
    u: np.ndarray
    sigma: float
    c: float
    iterations: int = 0
    converged: bool = True
    zero: bool = False
    subunit: bool = False  # optimum had ||v||_2 < 1
    trace: list = field(default_factory=list, repr=False)


def soft_threshold_unit(w, c: float, tol: float = 1e-8, max_iter: int = 60):
    """Maximizer of ``w @ v`` subject to ``||v||_2 <= 1`` and ``||v||_1 <= c``.

    Returns ``(v, status)`` with status one of the ``ST_*`` codes of
    :mod:`niece._backend`; a zero ``w`` gives a zero vector and ``ST_ZERO``.
    """
    w = np.ascontiguousarray(w, dtype=float)
    return kernels.soft_threshold_unit(w, float(c), tol, max_iter)


def deflate(Xk, v) -> np.ndarray:
    """Return ``Xk (I - v v^T)``."""
    Xk = np.asarray(Xk, dtype=float)
    v = np.asarray(v, dtype=float)
    if Xk.ndim != 2 or v.shape != (Xk.shape[1],):
        raise PmdError(f"shape mismatch: X is {Xk.shape}, v is {v.shape}")
    return Xk - np.outer(Xk @ v, v)


def _initial_v(Xk: np.ndarray, init: str, bump: bool = False) -> np.ndarray:
    if init == "svd":
        # leading right singular vector through the smaller Gram matrix
        n, p = Xk.shape
        if n <= p:
            _, a = scipy.linalg.eigh(Xk @ Xk.T, subset_by_index=[n - 1, n - 1])
            v = Xk.T @ a[:, 0]
        else:
            _, v = scipy.linalg.eigh(Xk.T @ Xk, subset_by_index=[p - 1, p - 1])
            v = v[:, 0]
        v = np.abs(v) if bump else v
    elif init == "colnorm":
        v = np.sqrt(np.einsum("ij,ij->j", Xk, Xk))
    else:
        raise PmdError(f"unknown init {init!r}")
    if bump:
        v[np.argmax(np.abs(v))] += 1e-6
    return v / np.linalg.norm(v)


def _alternate(Xk, v, cfg):
    return kernels.pmd_alternate(Xk, np.ascontiguousarray(v, dtype=float), float(cfg.c), cfg.rel_tol,
                                 cfg.v_tol, cfg.bisect_tol, cfg.bisect_max, cfg.max_alt_iters)


def pmd_rank_one(Xk, cfg: PmdConfig) -> PmdFactor:
    """Leading sparse factor of ``Xk`` by alternating exact block updates."""
    Xk = np.ascontiguousarray(Xk, dtype=float)
    n, p = Xk.shape
    if not np.any(Xk):
        raise PmdError("cannot decompose a zero matrix")
    u = v = None
    for bump in (False, True):
        u, v, trace, iters, converged, status = _alternate(Xk, _initial_v(Xk, cfg.init, bump), cfg)
        if v is not None:
            break
    if v is None:
        return PmdFactor(v=np.zeros(p), u=np.zeros(n), sigma=0.0, c=cfg.c,
                         iterations=iters, converged=False, zero=True, trace=trace)
    # final u is the exact maximizer for the final v
    xv = Xk @ v
    u = xv / np.linalg.norm(xv)
    sign = np.sign(fix_signs(v) @ v) or 1.0
    v, u = sign * v, sign * u
    if not converged:
        warnings.warn(f"PMD alternation hit max_alt_iters={cfg.max_alt_iters}", RuntimeWarning)
    return PmdFactor(v=v, u=u, sigma=float(u @ Xk @ v), c=cfg.c, iterations=iters,
                     converged=converged, subunit=status == ST_SUBUNIT, trace=trace)


def pmd_decompose(Xn, d: int, cfg: PmdConfig, zero_tol: float = 1e-10) -> list[PmdFactor]:
    """``d`` sequential PMD factors of ``Xn`` with multiplicative deflation.

    Once the deflated matrix is numerically zero (Frobenius norm below
    ``zero_tol`` times that of ``Xn``), the remaining factors are returned
    with ``zero=True``.
    """
    X = np.asarray(Xn, dtype=float)
    n, p = X.shape
    if not 1 <= d <= min(n, p):
        raise PmdError(f"d must lie in [1, min(n, p) = {min(n, p)}], got {d}")
    scale = np.linalg.norm(X)
    if scale == 0.0:
        raise PmdError("cannot decompose a zero matrix")
    factors = []
    Xk = X
    for _ in range(d):
        if np.linalg.norm(Xk) <= zero_tol * scale:
            factors.append(PmdFactor(v=np.zeros(p), u=np.zeros(n), sigma=0.0, c=cfg.c, zero=True))
            continue
        f = pmd_rank_one(Xk, cfg)
        factors.append(f)
        if not f.zero:
            Xk = deflate(Xk, f.v)
    return factors
