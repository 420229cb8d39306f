"""Compare the compiled kernels with the numpy fallback.

Kernel timings call both modules directly on the same inputs. End-to-end
timings run a small pipeline in a subprocess with and without
``NIECE_PURE_PYTHON=1`` so the whole package picks up each backend.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from niece import _kernels_py

try:
    from niece import _kernels as _kernels_cy
except ImportError:
    _kernels_cy = None

PIPELINE = """
import time, warnings
import numpy as np
warnings.simplefilter("ignore")
from niece import BACKEND
from niece.glm import lasso_cox, lasso_logistic
from niece.pmd import PmdConfig, pmd_decompose
rng = np.random.default_rng(0)
X = rng.standard_normal((200, 400))
y = (X[:, :5].sum(1) + rng.standard_normal(200) > 0).astype(float)
T = rng.exponential(1.0, 200) / np.exp(0.5 * X[:, :5].sum(1))
ev = (rng.uniform(size=200) < 0.7).astype(float)
t = {}
t0 = time.perf_counter(); pmd_decompose(X, 10, PmdConfig(c=4.0)); t["pmd (d 10)"] = time.perf_counter() - t0
t0 = time.perf_counter(); lasso_logistic(X, y, 0.02); t["lasso logistic"] = time.perf_counter() - t0
t0 = time.perf_counter(); lasso_cox(X, T, ev, 0.02); t["lasso cox"] = time.perf_counter() - t0
print(BACKEND, *(f"{k}={v:.4f}" for k, v in t.items()), sep="|")
"""


def kernel_cases(rng):
    X = rng.standard_normal((200, 400))
    w = rng.standard_normal(400)
    v0 = np.linalg.svd(X, full_matrices=False)[2][0].copy()
    Xf = np.asfortranarray(X)
    wt = rng.uniform(0.1, 0.25, 200)
    resid = rng.standard_normal(200)
    A = np.asfortranarray(rng.standard_normal((200, 100)))
    B = np.asfortranarray(0.3 * rng.standard_normal((200, 100)))
    wa, wb = np.full(200, 1 / 200), np.full(200, 0.5 / 200)
    g = 0.1 * rng.standard_normal(100)
    return {
        "soft_threshold_unit": lambda k: k.soft_threshold_unit(w, 5.0, 1e-8, 60),
        "pmd_alternate": lambda k: k.pmd_alternate(X, v0, 5.0, 1e-6, 1e-6, 1e-8, 60, 1000),
        "wlasso_cd": lambda k: k.wlasso_cd(Xf, wt, resid.copy(), np.zeros(400), 0.0, 0.05,
                                           True, 1e-10, 10000),
        "lowrank_lasso_cd": lambda k: k.lowrank_lasso_cd(A, wa, B, wb, g, np.zeros(100), 0.01,
                                                         1e-12, 10000),
    }


def best_of(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05 and number < 10_000:
        number *= 10
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def pipeline(pure):
    env = dict(os.environ, NIECE_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", PIPELINE], env=env, capture_output=True,
                         text=True, check=True).stdout.strip().split("|")
    return out[0], {k: float(v) for k, v in (s.split("=") for s in out[1:])}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels_cy is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return 1
    cases = kernel_cases(np.random.default_rng(0))
    print(f"{'kernel':<22}{'cython (s)':>14}{'python (s)':>14}{'speedup':>10}")
    for name, call in cases.items():
        tc = best_of(lambda: call(_kernels_cy), args.repeat)
        tp = best_of(lambda: call(_kernels_py), args.repeat)
        print(f"{name:<22}{tc:>14.2e}{tp:>14.2e}{tp / tc:>9.1f}x")
    print()
    (bc, tc), (bp, tp) = pipeline(False), pipeline(True)
    print(f"{'pipeline':<22}{bc + ' (s)':>14}{bp + ' (s)':>14}{'speedup':>10}")
    for k in tc:
        print(f"{k:<22}{tc[k]:>14.3f}{tp[k]:>14.3f}{tp[k] / tc[k]:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
