"""Replicate runners behind ``niece simulate`` and ``niece bench``.

Every replicate draws from its own generator keyed by (seed, replicate), so
results do not depend on thread count or scheduling.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import niece_fit
from .models import fit_envelope
from .simgen import delta_beta, delta_gamma, envelope_population, gen_model, wishart_pair
from .tuning import default_c_grid, make_plan, select_c, select_lambda

METHODS = ("NIECE", "SNIECE", "PCR", "SPCR")
MODEL_TASK = {"M1": "response_linear", "M2": "predictor_linear", "M3": "logistic", "M4": "cox"}


@dataclass
class SimConfig:
    model: str = "M1"
    cov_kind: int = 1
    n: int = 200
    p: int = 400
    q: int | None = None
    u: int = 3
    s: int = 10
    d: int | None = 10
    reps: int = 50
    seed: int = 20240101
    folds: int = 5
    c_grid_size: int = 8
    methods: list = field(default_factory=lambda: list(METHODS))

    def __post_init__(self):
        self.model = self.model.upper()
        if self.model not in MODEL_TASK:
            raise ValueError(f"unknown model {self.model!r}")
        if self.cov_kind not in (1, 2, 3):
            raise ValueError(f"covariance kind must be 1, 2 or 3, got {self.cov_kind}")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods: {sorted(bad)}")
        if self.reps < 1:
            raise ValueError("reps must be positive")

    @classmethod
    def from_dict(cls, cfg: dict) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(cfg) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**cfg)

    def to_dict(self) -> dict:
        return asdict(self)


def _stream(seed, *keys) -> int:
    return int(np.random.SeedSequence([int(seed), *keys]).generate_state(1)[0])


def _beta_hat(model, fit):
    # M2 truth is p x q (predictor x response); fits store response x predictor
    return fit.beta_env.T if model == "M2" else fit.beta_env


def run_replicate(cfg: SimConfig, rep: int) -> dict:
    """One replicate: every requested method's Delta_beta and Delta_Gamma."""
    row = {"replicate": rep, "status": "ok"}
    t0 = time.perf_counter()
    try:
        data, truth = gen_model(cfg.model, cfg.cov_kind, cfg.n, cfg.p, cfg.q,
                                seed=np.random.default_rng(np.random.SeedSequence([cfg.seed, rep])),
                                u=cfg.u, s=cfg.s)
        task = MODEL_TASK[cfg.model]
        u = cfg.u
        dim = data.Y.shape[1] if task == "response_linear" else data.p
        d = min(2 * u, cfg.n - 1, dim) if cfg.d is None else cfg.d
        plan = make_plan(data.n, cfg.folds, _stream(cfg.seed, rep, 1))
        extra = {}
        if task in ("logistic", "cox"):
            lam = select_lambda(data, task, plan=plan).value
            fit0 = fit_envelope(data, task, u, d, lam=lam)
            extra["pilot"] = fit0.pilot
            row["lambda"] = lam
        else:
            lam = None
        grid = default_c_grid(dim, cfg.c_grid_size)
        for name in cfg.methods:
            select = "score" if name in ("NIECE", "SNIECE") else "leading"
            c = None
            if name in ("SNIECE", "SPCR"):
                c = select_c(data, task, u, d, grid, lam=lam, select=select, plan=plan).value
                row[f"c_{name}"] = c
            fit = fit_envelope(data, task, u, d, c=c, lam=lam, select=select, **extra)
            row[f"dgamma_{name}"] = delta_gamma(truth.Gamma, fit.basis)
            row[f"dbeta_{name}"] = delta_beta(truth.beta, _beta_hat(cfg.model, fit))
            row[f"selected_{name}"] = " ".join(str(i + 1) for i in fit.selection.selected)
    except Exception as exc:       # recorded per replicate; the run continues
        row["status"] = f"failed: {type(exc).__name__}: {exc}"
    row["seconds"] = time.perf_counter() - t0
    return row


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_simulation(cfg: SimConfig, threads: int = 1) -> list[dict]:
    return _map(lambda r: run_replicate(cfg, r), range(cfg.reps), threads)


def summarize(cfg: SimConfig, rows: list[dict]) -> dict:
    """Medians per method over successful replicates."""
    ok = [r for r in rows if r["status"] == "ok"]
    out = {"model": cfg.model, "cov_kind": cfg.cov_kind, "n": cfg.n, "p": cfg.p, "u": cfg.u,
           "replicates": len(rows), "failed": len(rows) - len(ok), "median": {}}
    for name in cfg.methods:
        entry = {}
        for key, label in (("dgamma", "delta_gamma"), ("dbeta", "delta_beta")):
            vals = [r[f"{key}_{name}"] for r in ok]
            entry[label] = float(np.median(vals)) if vals else None
        out["median"][name] = entry
    return out


@dataclass
class BenchConfig:
    n: int = 200
    p: int = 100
    u: int = 5
    d: int = 20
    reps: int = 100
    signals: list = field(default_factory=lambda: [0.01, 1.0, 100.0])
    seed: int = 20240101

    def __post_init__(self):
        if self.reps < 1 or not self.signals or min(self.signals) <= 0:
            raise ValueError("bench needs reps >= 1 and positive signal levels")
        if not self.u <= self.d <= self.p or self.n < self.p:
            raise ValueError("bench needs u <= d <= p <= n")

    @classmethod
    def from_dict(cls, cfg: dict) -> "BenchConfig":
        extra = set(cfg) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**cfg)


def run_bench_replicate(cfg: BenchConfig, signal: float, rep: int) -> dict:
    """Wishart draws around a known envelope, then one timed NIECE fit.

    The population and the Wishart noise are shared across signal levels
    for a given replicate, so levels differ only through ``signal``.
    """
    positions = tuple(np.linspace(2, 19, cfg.u).round().astype(int)) if cfg.u != 5 else (2, 3, 10, 11, 19)
    M, U, Gamma = envelope_population(cfg.p, cfg.u, signal, seed=_stream(cfg.seed, rep, 0),
                                      positions=positions)
    M_hat, U_hat = wishart_pair(M, U, cfg.n, seed=_stream(cfg.seed, rep, 1))
    t0 = time.perf_counter()
    fit = niece_fit(M_hat, U_hat, cfg.u, cfg.d)
    elapsed = time.perf_counter() - t0
    return {"signal": signal, "replicate": rep, "D": delta_gamma(Gamma, fit.basis),
            "seconds": elapsed, "selected": " ".join(str(i + 1) for i in fit.selected)}


def run_bench(cfg: BenchConfig, threads: int = 1) -> list[dict]:
    jobs = [(s, r) for s in cfg.signals for r in range(cfg.reps)]
    return _map(lambda j: run_bench_replicate(cfg, *j), jobs, threads)
