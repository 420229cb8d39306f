"""Envelope component selection.

Candidates are the leading eigenvectors of ``M_hat`` (dense path) or
sequential PMD directions of a data matrix with ``M_hat = Xn^T Xn``
(sparse path). Each candidate ``v_j`` gets the envelope score
``phi_j = v_j^T U_hat v_j``; the ``u`` best-scoring candidates span the
estimated envelope.
"""
from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .linalg import LinalgError, as_symmetric, orthonormalize, sym_eigen
from .pmd import PmdConfig, pmd_decompose

PSD_TOL = 1e-8
RANK_TOL = 1e-10


class NieceError(ValueError):
    pass


@dataclass
class EnvelopeScoreTable:
    """Envelope scores of the candidates and the gap diagnostics.

    ``order`` lists candidate indices (0-based) by decreasing score.
    ``eigen_gap`` is the smallest spacing among the candidate eigenvalues,
    ``score_gap`` the drop between the ``u``-th and ``(u+1)``-th ranked
    scores and ``u_norm`` the operator norm of ``U_hat``.
    """

    scores: np.ndarray
    order: np.ndarray
    eigen_gap: float
    score_gap: float
    u_norm: float


@dataclass
class NieceResult:
    basis: np.ndarray
    selected: np.ndarray
    score_table: EnvelopeScoreTable
    candidates: np.ndarray
    values: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def u(self) -> int:
        return self.basis.shape[1]

    @property
    def d(self) -> int:
        return self.candidates.shape[1]


def _op_norm_psd(U: np.ndarray, check: bool) -> float:
    if not np.any(U):
        return 0.0
    if check:
        w = np.linalg.eigvalsh(U)
        top = max(w[-1], 0.0)
        if w[0] < -PSD_TOL * max(top, np.finfo(float).tiny):
            raise NieceError(f"U_hat is not positive semi-definite (min eigenvalue {w[0]:.3e})")
        return float(top)
    return float(np.linalg.norm(U, 2))


def envelope_scores(candidates, U_hat, u: int | None = None, values=None,
                    *, check_psd: bool = True, u_norm: float | None = None) -> EnvelopeScoreTable:
    """Score candidate directions against ``U_hat``.

    Scores within ``1e-12 * ||U_hat||`` of zero are set to zero so that
    directions carrying no signal tie exactly and fall back to the candidate
    order (largest eigenvalue first).
    """
    V = np.atleast_2d(np.asarray(candidates, dtype=float))
    U = as_symmetric(U_hat, "U_hat")
    if U.shape[0] != V.shape[0]:
        raise NieceError(f"U_hat is {U.shape[0]}x{U.shape[0]} but candidates have {V.shape[0]} rows")
    d = V.shape[1]
    nu = _op_norm_psd(U, check_psd) if u_norm is None else float(u_norm)
    scores = np.einsum("ij,ij->j", V, U @ V)
    scores[np.abs(scores) <= 1e-12 * nu] = 0.0
    scores = np.maximum(scores, 0.0)
    order = np.argsort(-scores, kind="stable")
    if values is not None and len(values) > 1:
        vals = np.asarray(values, dtype=float)
        eigen_gap = float(np.min(vals[:-1] - vals[1:]))
    else:
        eigen_gap = 0.0
    if u is None or u >= d:
        score_gap = 0.0
    else:
        ranked = scores[order]
        score_gap = float(ranked[u - 1] - ranked[u])
    return EnvelopeScoreTable(scores=scores, order=order, eigen_gap=eigen_gap,
                              score_gap=score_gap, u_norm=nu)


def _assemble(V, values, U, u, select, extra_values=None, check_psd=True, u_norm=None, notes=()):
    d = V.shape[1]
    if u > d:
        raise NieceError(f"u={u} exceeds the number of usable candidates d={d}")
    gap_values = values if extra_values is None else np.append(values, extra_values)
    table = envelope_scores(V, U, u, gap_values, check_psd=check_psd, u_norm=u_norm)
    if select == "score":
        chosen = table.order[:u]
    elif select == "leading":
        chosen = np.arange(u)
    else:
        raise NieceError(f"unknown selection rule {select!r}")
    chosen = np.sort(chosen)
    try:
        basis = orthonormalize(V[:, chosen])
    except LinalgError as exc:
        raise NieceError(f"selected candidates are degenerate: {exc}") from exc
    return NieceResult(basis=basis, selected=chosen, score_table=table, candidates=V,
                       values=np.asarray(values, dtype=float), warnings=list(notes))


def _dense_candidates(M_hat, d):
    M = as_symmetric(M_hat, "M_hat")
    p = M.shape[0]
    if not 1 <= d <= p:
        raise NieceError(f"d must lie in [1, {p}], got {d}")
    eig = sym_eigen(M, min(d + 1, p))
    vals = eig.values
    top = vals[0]
    if top <= 0:
        raise NieceError("M_hat has no positive eigenvalue")
    if vals[min(d, len(vals)) - 1] < -PSD_TOL * top:
        raise NieceError("M_hat is not positive semi-definite on its leading eigenspace")
    notes = []
    keep = int(np.sum(vals[:d] >= RANK_TOL * top))
    if keep < d:
        notes.append(f"M_hat numerically rank {keep}; d reduced from {d} to {keep}")
    extra = vals[d] if len(vals) > d and keep == d else None
    return eig.vectors[:, :keep], np.maximum(vals[:keep], 0.0), extra, notes


def niece_fit(M_hat, U_hat, u: int, d: int, *, select: str = "score",
              check_psd: bool = True, u_norm: float | None = None) -> NieceResult:
    """Dense NIECE: top-``d`` eigenvectors of ``M_hat`` ranked by envelope score."""
    if not 1 <= u <= d:
        raise NieceError(f"need 1 <= u <= d, got u={u}, d={d}")
    V, vals, extra, notes = _dense_candidates(M_hat, d)
    return _assemble(V, vals, U_hat, u, select, extra, check_psd, u_norm, notes)


_CACHE: OrderedDict = OrderedDict()
_CACHE_LOCK = threading.Lock()
CACHE_SIZE = 64


def _cache_key(Xn, d, cfg):
    h = hashlib.blake2b(np.ascontiguousarray(Xn).view(np.uint8), digest_size=16)
    return (h.hexdigest(), Xn.shape, d, cfg)


def sparse_candidates(Xn, d: int, cfg: PmdConfig):
    """PMD directions of ``Xn`` (zero factors dropped) and their ``sigma^2``.

    Results are memoized on the bytes of ``Xn`` so that methods sharing a
    decomposition (score and leading selection, say) compute it once.
    """
    Xn = np.asarray(Xn, dtype=float)
    key = _cache_key(Xn, d, cfg)
    with _CACHE_LOCK:
        hit = _CACHE.get(key)
        if hit is not None:
            _CACHE.move_to_end(key)
    if hit is not None:
        V, sig2, notes = hit
        return V.copy(), sig2.copy(), list(notes)
    factors = pmd_decompose(Xn, d, cfg)
    live = [f for f in factors if not f.zero]
    notes = []
    if len(live) < d:
        notes.append(f"PMD produced {len(live)} non-zero factors; d reduced from {d}")
    if not live:
        raise NieceError("PMD produced no non-zero factor")
    V = np.column_stack([f.v for f in live])
    sig2 = np.array([f.sigma ** 2 for f in live])
    if not all(f.converged for f in live):
        notes.append("PMD alternation did not converge for some factors")
    with _CACHE_LOCK:
        _CACHE[key] = (V.copy(), sig2.copy(), tuple(notes))
        while len(_CACHE) > CACHE_SIZE:
            _CACHE.popitem(last=False)
    return V, sig2, notes


def sniece_fit(Xn, U_hat, u: int, d: int, c: float, *, select: str = "score",
               cfg: PmdConfig | None = None, check_psd: bool = True,
               u_norm: float | None = None) -> NieceResult:
    """Sparse NIECE: PMD(., L1) directions of ``Xn`` ranked by envelope score.

    ``M_hat`` is implicitly ``Xn^T Xn``. Scores are computed once against
    the given ``U_hat``; candidates are not orthogonal, so the selected
    columns are orthonormalized into the returned basis.
    """
    Xn = np.asarray(Xn, dtype=float)
    n, p = Xn.shape
    if not 1 <= u <= d <= min(n, p):
        raise NieceError(f"need 1 <= u <= d <= min(n, p) = {min(n, p)}, got u={u}, d={d}")
    cfg = PmdConfig(c=c) if cfg is None else cfg
    V, sig2, notes = sparse_candidates(Xn, d, cfg)
    return _assemble(V, sig2, U_hat, u, select, None, check_psd, u_norm, notes)


def pcr_select(M_or_X, U_hat, u: int, d: int, mode: str = "dense", c: float | None = None,
               **kw) -> NieceResult:
    """Principal component baseline: keep the first ``u`` candidates in order.

    ``mode="dense"`` takes ``M_hat``; ``mode="sparse"`` takes a data matrix
    and the PMD budget ``c``. Scores are still reported for diagnostics.
    """
    if mode == "dense":
        return niece_fit(M_or_X, U_hat, u, d, select="leading", **kw)
    if mode == "sparse":
        if c is None:
            raise NieceError("sparse mode needs the L1 budget c")
        return sniece_fit(M_or_X, U_hat, u, d, c, select="leading", **kw)
    raise NieceError(f"mode must be 'dense' or 'sparse', got {mode!r}")
