#!/usr/bin/env python3
"""Benchmark the doublet-fit kernel: compiled extension vs numpy fallback.

The weighted two-Lorentzian fit is the hot inner loop of every Monte Carlo
pipeline (4 fits per squeeze trial), so the compiled/python ratio here is
roughly the end-to-end speed ratio of `squeeze`, `backaction-scan`, and
`contrast-scan`.

Usage: python benchmarks/bench_fit.py [n_traces]
"""

import sys
import time

import numpy as np

from qndspin._kernels import py_fallback
from qndspin.config import load_config
from qndspin.spectroscopy import _initial_guess, synthesize_sweep

try:
    from qndspin._kernels import _core
except ImportError:
    _core = None


def make_traces(n):
    cfg = load_config()
    rng = np.random.default_rng(2024)
    traces = []
    for _ in range(n):
        tr = synthesize_sweep(3.5e5, cfg.g_eff, cfg.sweep, cfg.cavity, rng)
        x = np.asarray(tr.freq, float)
        y = np.asarray(tr.power, float)
        w = 1.0 / np.maximum(y, 1.0)
        traces.append((x, y, w, _initial_guess(x, y, 8.39e6)))
    return traces


def bench(impl, traces, repeats=3):
    best = float("inf")
    results = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        results = [impl.fit_doublet(*t) for t in traces]
        best = min(best, time.perf_counter() - t0)
    return best, results


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 400
    traces = make_traces(n)

    t_py, res_py = bench(py_fallback, traces)
    print(f"python fallback : {t_py / n * 1e3:8.3f} ms/fit   ({n} traces, best of 3)")
    if _core is None:
        print("compiled        : not built (pip install -e . builds it)")
        return
    t_c, res_c = bench(_core, traces)
    print(f"compiled        : {t_c / n * 1e3:8.3f} ms/fit")
    print(f"speedup         : {t_py / t_c:8.1f}x")

    worst = 0.0
    for (p1, *_r1), (p2, *_r2) in zip(res_py, res_c):
        s1, s2 = p1[0] - p1[1], p2[0] - p2[1]
        worst = max(worst, abs(s1 - s2) / abs(s1))
    print(f"worst splitting disagreement between backends: {worst:.2e} (relative)")


if __name__ == "__main__":
    main()
