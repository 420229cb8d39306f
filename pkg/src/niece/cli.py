"""Command-line front end: ``niece fit | predict | simulate | bench``.

Exit codes: 0 success, 2 input/parse errors, 3 numerical failures,
4 more than 10% of simulation replicates failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from .core import NieceError
from .glm import GlmError, cox_neg_partial_loglik
from .harness import BenchConfig, SimConfig, run_bench, run_simulation, summarize
from .linalg import LinalgError
from .models import TASKS, Dataset, EnvelopeFit, ModelError, fit_envelope, predict
from .pmd import PmdError
from .tuning import TuningError, make_plan, select_c, select_lambda, select_u

DEFAULT_SEED = 20240101
NUMERIC_ERRORS = (NieceError, GlmError, LinalgError, PmdError, ModelError, TuningError,
                  np.linalg.LinAlgError)
LINEAR = ("response_linear", "predictor_linear", "simultaneous_linear")


class InputError(Exception):
    """Bad files, columns or flags; maps to exit code 2."""


# ---------------------------------------------------------------- CSV / JSON io

def read_csv(path):
    """Header plus a float matrix; parse errors report the file line number."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: not UTF-8 text") from exc
    if not rows:
        raise InputError(f"{path}: empty file, a header row is required")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names in header")
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise InputError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        vals = []
        for name, cell in zip(header, row):
            try:
                vals.append(float(cell))
            except ValueError:
                raise InputError(f"{path}: line {lineno}: column '{name}': cannot parse {cell.strip()!r}") from None
        body.append(vals)
    if not body:
        raise InputError(f"{path}: no data rows")
    return header, np.array(body)


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def write_json(path, payload):
    # json emits floats with repr, the shortest string that round-trips exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")


def _columns(header, names, path):
    missing = [n for n in names if n not in header]
    if missing:
        raise InputError(f"{path}: missing column(s): {', '.join(missing)}")
    return [header.index(n) for n in names]


def _split_names(s):
    return [t.strip() for t in s.split(",") if t.strip()] if s else []


def load_dataset(path, task, response=None, time_col=None, event_col=None, predictors=None):
    header, data = read_csv(path)
    if task == "cox":
        if not time_col or not event_col:
            raise InputError("cox task needs --time and --event")
        resp = [time_col, event_col]
    else:
        resp = _split_names(response)
        if not resp:
            raise InputError("--response is required for this task")
        if task == "logistic" and len(resp) != 1:
            raise InputError("logistic task takes a single --response column")
    ridx = _columns(header, resp, path)
    xnames = _split_names(predictors) or [h for h in header if h not in resp]
    xidx = _columns(header, xnames, path)
    X = data[:, xidx]
    try:
        if task == "cox":
            ds = Dataset(X=X, time=data[:, ridx[0]], event=data[:, ridx[1]], x_names=xnames, y_names=resp)
        elif task == "logistic":
            ds = Dataset(X=X, y=data[:, ridx[0]], x_names=xnames, y_names=resp)
        else:
            ds = Dataset(X=X, Y=data[:, ridx], x_names=xnames, y_names=resp)
    except ModelError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return ds


def fit_to_dict(fit: EnvelopeFit) -> dict:
    def table(sel):
        if sel is None:
            return None
        t = sel.score_table
        return {"selected": [int(i) + 1 for i in sel.selected], "scores": t.scores,
                "order": [int(i) + 1 for i in t.order], "candidate_values": sel.values,
                "eigen_gap": t.eigen_gap, "score_gap": t.score_gap, "u_norm": t.u_norm}
    return {
        "task": fit.task, "hyper": fit.hyper, "x_names": fit.x_names, "y_names": fit.y_names,
        "basis": fit.basis, "basis_y": fit.basis_y, "eta": fit.eta, "beta_env": fit.beta_env,
        "intercept": fit.intercept, "scores": table(fit.selection), "scores_y": table(fit.selection_y),
        "notes": fit.notes,
    }


def fit_from_dict(d: dict) -> EnvelopeFit:
    arr = lambda v: None if v is None else np.asarray(v, dtype=float)
    icpt = d["intercept"]
    icpt = np.asarray(icpt, dtype=float) if isinstance(icpt, list) else float(icpt)
    return EnvelopeFit(task=d["task"], basis=arr(d["basis"]), basis_y=arr(d.get("basis_y")),
                       eta=arr(d["eta"]), beta_env=arr(d["beta_env"]), intercept=icpt,
                       hyper=d.get("hyper", {}), x_names=d.get("x_names"), y_names=d.get("y_names"),
                       notes=d.get("notes", []))


# ---------------------------------------------------------------- commands

def _threads(args) -> int:
    env = os.environ.get("NIECE_THREADS")
    if env:
        try:
            t = int(env)
        except ValueError:
            raise InputError(f"NIECE_THREADS must be an integer, got {env!r}") from None
    else:
        t = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if t < 1:
        raise InputError("thread count must be positive")
    return t


def _parse_c(text):
    if text is None:
        return None
    if text == "cv":
        return "cv"
    try:
        c = float(text)
    except ValueError:
        raise InputError(f"--c must be a number or 'cv', got {text!r}") from None
    if c < 1:
        raise InputError("--c must be at least 1")
    return c


def cmd_fit(args) -> int:
    task = args.task
    data = load_dataset(args.data, task, args.response, args.time, args.event, args.predictors)
    plan = make_plan(data.n, args.folds, args.seed)
    cv_tables = {}
    lam = args.lam
    if task in ("logistic", "cox") and lam is None:
        res = select_lambda(data, task, plan=plan)
        lam = res.value
        cv_tables["lambda"] = {"grid": res.grid, "loss": res.loss}
    c = _parse_c(args.c)
    u = args.u
    curve = None
    if args.u_grid:
        if task == "simultaneous_linear":
            raise InputError("--u-grid is not supported for simultaneous fits")
        try:
            grid = [int(v) for v in _split_names(args.u_grid)]
        except ValueError:
            raise InputError(f"--u-grid must list integers, got {args.u_grid!r}") from None
        res = select_u(data, task, grid, c=c, lam=lam, plan=plan)
        u = int(res.value)
        curve = res
        cv_tables["u"] = {"grid": res.grid, "loss": res.loss}
        if c == "cv":
            c = res.extra["c"][list(res.grid).index(u)]
        args.d = None
    elif u is None:
        raise InputError("give --u or --u-grid")
    if task == "simultaneous_linear":
        u = (args.u, args.u_y if args.u_y is not None else args.u)
        d = None if args.d is None else (args.d, args.d_y if args.d_y is not None else args.d)
        if c == "cv":
            raise InputError("--c cv is not supported for simultaneous fits; give a number")
    else:
        d = args.d
    if c == "cv":
        res = select_c(data, task, u, d, lam=lam, plan=plan)
        c = res.value
        cv_tables["c"] = {"grid": res.grid, "loss": res.loss}
    kw = {"m_hat": args.m_hat} if task == "response_linear" else {}
    fit = fit_envelope(data, task, u, d, c=c, lam=lam, **kw)
    fit.hyper.update(folds=args.folds, seed=args.seed)
    payload = fit_to_dict(fit)
    payload["cv"] = cv_tables
    payload["created"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    prefix = args.out_prefix
    write_json(f"{prefix}_fit.json", payload)
    rows = []
    if fit.beta_env.ndim == 1:
        rows = [[name, b] for name, b in zip(data.x_names, fit.beta_env)]
        header = ["variable", "beta_env"]
    else:
        header = ["variable"] + [f"beta_env:{r}" for r in data.y_names]
        rows = [[name, *fit.beta_env[:, j]] for j, name in enumerate(data.x_names)]
    write_csv(f"{prefix}_coef.csv", header, rows)
    wrote = f"{prefix}_fit.json and {prefix}_coef.csv"
    if curve is not None:
        write_csv(f"{prefix}_ucurve.csv", ["u", "d", "cv_loss"],
                  ([int(v), min(2 * int(v), data.n - 1, fit.basis.shape[0]), float(l)]
                   for v, l in zip(curve.grid, curve.loss)))
        wrote += f" and {prefix}_ucurve.csv"
    print(f"wrote {wrote}")
    return 0


def cmd_predict(args) -> int:
    try:
        with open(args.fit, encoding="utf-8") as fh:
            fit = fit_from_dict(json.load(fh))
    except OSError as exc:
        raise InputError(f"cannot read {args.fit}: {exc.strerror}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{args.fit}: not a fit file ({exc})") from exc
    header, data = read_csv(args.data)
    X = data[:, _columns(header, fit.x_names, args.data)]
    out = predict(fit, X)
    prefix = args.out_prefix
    loss = None
    if fit.task in LINEAR:
        write_csv(f"{prefix}_pred.csv", [f"pred:{r}" for r in fit.y_names], out)
        if all(r in header for r in fit.y_names):
            Y = data[:, _columns(header, fit.y_names, args.data)]
            loss = {"pmse": float(np.mean(np.sum((Y - out) ** 2, axis=1)))}
    elif fit.task == "logistic":
        prob, lab = out
        write_csv(f"{prefix}_pred.csv", ["probability", "label"], zip(prob, lab))
        if fit.y_names[0] in header:
            y = data[:, header.index(fit.y_names[0])]
            loss = {"misclassification_pct": float(100 * np.mean(lab != y))}
    else:
        write_csv(f"{prefix}_pred.csv", ["risk_score"], ([v] for v in out))
        if all(r in header for r in fit.y_names):
            T, ev = (data[:, header.index(r)] for r in fit.y_names)
            loss = {"neg_partial_loglik": cox_neg_partial_loglik(fit.beta_env, X, T, ev)[0]}
    if loss is not None:
        write_json(f"{prefix}_loss.json", loss)
    print(f"wrote {prefix}_pred.csv" + (f" and {prefix}_loss.json" if loss else ""))
    return 0


def _load_config(path, cls, overrides):
    cfg = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(cfg, dict):
            raise InputError(f"{path}: config must be a JSON object")
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid config: {exc}") from exc


SIM_FIELDS = ["replicate", "status"] + [f"{k}_{m}" for m in ("NIECE", "SNIECE", "PCR", "SPCR")
                                        for k in ("dgamma", "dbeta", "selected")] + \
             ["c_SNIECE", "c_SPCR", "lambda"]


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, SimConfig, dict(model=args.model, cov_kind=args.cov, n=args.n,
                                                     p=args.p, reps=args.reps, seed=args.seed_opt,
                                                     folds=args.folds_opt))
    threads = _threads(args)
    t0 = time.perf_counter()
    rows = run_simulation(cfg, threads)
    wall = time.perf_counter() - t0
    prefix = args.out_prefix
    # per-replicate CSV holds no timings so reruns compare byte for byte
    write_csv(f"{prefix}_replicates.csv", SIM_FIELDS, ([r.get(k, "") for k in SIM_FIELDS] for r in rows))
    summary = summarize(cfg, rows)
    summary.update(config=cfg.to_dict(), threads=threads, wall_seconds=wall)
    write_json(f"{prefix}_summary.json", summary)
    failed = summary["failed"]
    for r in rows:
        if r["status"] != "ok":
            print(f"replicate {r['replicate']}: {r['status']}", file=sys.stderr)
    print(f"wrote {prefix}_replicates.csv and {prefix}_summary.json ({failed} failed)")
    return 4 if failed > 0.1 * len(rows) else 0


def cmd_bench(args) -> int:
    signals = [float(s) for s in _split_names(args.signals)] if args.signals else None
    cfg = _load_config(args.config, BenchConfig, dict(n=args.n, p=args.p, u=args.u, d=args.d,
                                                      reps=args.reps, signals=signals, seed=args.seed_opt))
    threads = _threads(args)
    rows = run_bench(cfg, threads)
    prefix = args.out_prefix
    write_csv(f"{prefix}_bench.csv", ["signal", "replicate", "D", "seconds", "selected"],
              ([r["signal"], r["replicate"], r["D"], r["seconds"], r["selected"]] for r in rows))
    med = {str(s): {"median_D": float(np.median([r["D"] for r in rows if r["signal"] == s])),
                    "median_seconds": float(np.median([r["seconds"] for r in rows if r["signal"] == s]))}
           for s in cfg.signals}
    write_json(f"{prefix}_bench_summary.json", {"config": vars(cfg), "by_signal": med})
    print(f"wrote {prefix}_bench.csv and {prefix}_bench_summary.json")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="niece", description="Non-iterative envelope component estimation.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out-prefix", default="niece", help="prefix for output files (default: niece)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: all cores; NIECE_THREADS overrides)")

    f = sub.add_parser("fit", help="fit an envelope model to a CSV file")
    f.add_argument("--data", required=True, help="input CSV with a header row")
    f.add_argument("--task", required=True, choices=TASKS)
    f.add_argument("--response", help="comma-separated response column(s)")
    f.add_argument("--time", help="survival time column (cox)")
    f.add_argument("--event", help="event indicator column (cox)")
    f.add_argument("--predictors", help="comma-separated predictor columns (default: all others)")
    f.add_argument("--u", type=int, default=None, help="envelope dimension (predictor side for simultaneous)")
    f.add_argument("--u-grid", default=None,
                   help="comma-separated envelope dimensions; picks u by CV and writes the loss curve")
    f.add_argument("--d", type=int, default=None, help="number of candidate directions (default: 2u)")
    f.add_argument("--u-y", type=int, default=None, help="response-side dimension for simultaneous fits")
    f.add_argument("--d-y", type=int, default=None, help="response-side candidates for simultaneous fits")
    f.add_argument("--c", default=None, help="PMD L1 budget, enables the sparse path; 'cv' to select it")
    f.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="lasso penalty for logistic/cox (default: cross-validated)")
    f.add_argument("--m-hat", choices=("marginal", "residual"), default="marginal",
                   help="response envelopes: use Sigma_Y or the residual covariance")
    f.add_argument("--folds", type=int, default=5, help="cross-validation folds (default: 5)")
    f.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed (default: {DEFAULT_SEED})")
    common(f)
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict from a saved fit")
    p.add_argument("--fit", required=True, help="fit JSON written by 'niece fit'")
    p.add_argument("--data", required=True, help="CSV with the training predictor columns")
    common(p)
    p.set_defaults(func=cmd_predict)

    s = sub.add_parser("simulate", help="run a simulation design (M1-M4)")
    s.add_argument("--config", help="JSON simulation config")
    s.add_argument("--model", choices=("M1", "M2", "M3", "M4"))
    s.add_argument("--cov", type=int, choices=(1, 2, 3), help="covariance structure")
    s.add_argument("--n", type=int)
    s.add_argument("--p", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--folds", dest="folds_opt", type=int, help="cross-validation folds (default: 5)")
    s.add_argument("--seed", dest="seed_opt", type=int, help=f"master seed (default: {DEFAULT_SEED})")
    common(s)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="Wishart-pair accuracy and timing sweep")
    b.add_argument("--config", help="JSON bench config")
    b.add_argument("--n", type=int)
    b.add_argument("--p", type=int)
    b.add_argument("--u", type=int)
    b.add_argument("--d", type=int)
    b.add_argument("--reps", type=int)
    b.add_argument("--signals", help="comma-separated signal strengths (default: 0.01,1,100)")
    b.add_argument("--seed", dest="seed_opt", type=int, help=f"master seed (default: {DEFAULT_SEED})")
    common(b)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure ({type(exc).__module__.split('.')[-1]}): {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
