"""Timing harness for the evaluation kernels: compiled core vs numpy fallback."""

from __future__ import annotations

import time

import numpy as np

from . import _kernels_py

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None


def _workload(rng):
    q = 6
    poles = -(10 ** rng.uniform(8.5, 11.0, q)).astype(complex)
    residues = rng.uniform(-1e-3, 1e-3, q).astype(complex)
    tpts = np.concatenate([[0.0], np.sort(rng.uniform(1e-12, 2e-9, 99))])
    vpts = np.concatenate([[0.0], rng.uniform(0, 1.1, 99)])
    teval = np.sort(rng.uniform(0, 2.5e-9, 2000))
    vsamp = rng.uniform(0, 1.1, 20000)
    return poles, residues, tpts, vpts, teval, vsamp


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeat=5, seed=42):
    """Per-kernel best-of-N timings for both backends."""
    rng = np.random.default_rng(seed)
    poles, residues, tpts, vpts, teval, vsamp = _workload(rng)
    state = _kernels_py.pwl_state_init(len(poles))
    dt_conv = 0.1 / np.abs(poles).max()

    def cases(mod):
        return {
            "eval_pwl_current[2000 pts]": lambda: mod.eval_pwl_current(
                poles, residues, tpts, vpts, teval
            ),
            "state_eval x5000": lambda: [
                mod.pwl_state_eval(poles, residues, state, 0.3, 1e9, 1e-12)
                for _ in range(5000)
            ],
            "state_advance x5000": lambda: [
                mod.pwl_state_advance(poles, residues, state, 0.3, 1e9, 1e-12)
                for _ in range(5000)
            ],
            "convolution[20k samples]": lambda: mod.convolution_currents(
                poles, residues, vsamp, dt_conv
            ),
        }

    rows = []
    py_cases = cases(_kernels_py)
    cy_cases = cases(_kernels_cy) if _kernels_cy is not None else {}
    for name, fn in py_cases.items():
        t_py = _time(fn, repeat)
        t_cy = _time(cy_cases[name], repeat) if cy_cases else None
        rows.append(
            {
                "name": name,
                "python_s": t_py,
                "cython_s": t_cy,
                "speedup": (t_py / t_cy) if t_cy else None,
            }
        )
    return rows


def check_parity(seed=42):
    """Max relative deviation between backends on the benchmark workload."""
    if _kernels_cy is None:
        return None
    rng = np.random.default_rng(seed)
    poles, residues, tpts, vpts, teval, vsamp = _workload(rng)
    worst = 0.0
    a = _kernels_py.eval_pwl_current(poles, residues, tpts, vpts, teval)
    b = _kernels_cy.eval_pwl_current(poles, residues, tpts, vpts, teval)
    worst = max(worst, float(np.abs(a - b).max() / (np.abs(a).max() + 1e-30)))
    dt_conv = 0.1 / np.abs(poles).max()
    a = _kernels_py.convolution_currents(poles, residues, vsamp, dt_conv)
    b = _kernels_cy.convolution_currents(poles, residues, vsamp, dt_conv)
    worst = max(worst, float(np.abs(a - b).max() / (np.abs(a).max() + 1e-30)))
    return worst
