# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled evaluation kernels; API mirrors _kernels_py.

The closed-form current evaluation sits inside the per-step binary search
of the matching loop, so the scalar state update/evaluate pair dominates
a batch run; the waveform evaluator and the convolution recursion are the
other hot paths.
"""

import numpy as np

cimport cython
from libc.math cimport cos, exp, sin

BACKEND = "cython"

cdef double _EXP_FLOOR = -700.0


cdef inline double complex _expc_fast(double re, double im) noexcept:
    cdef double m
    if re < _EXP_FLOOR:
        return 0.0
    m = exp(re)
    if im == 0.0:
        return m
    return m * (cos(im) + 1j * sin(im))


def eval_pwl_current(poles, residues, tpts, vpts, teval, telescoped=True, hold_last=True):
    cdef double complex[::1] p = np.ascontiguousarray(poles, dtype=np.complex128)
    cdef double complex[::1] r = np.ascontiguousarray(residues, dtype=np.complex128)
    cdef double[::1] tp = np.ascontiguousarray(tpts, dtype=np.float64)
    cdef double[::1] vp = np.ascontiguousarray(vpts, dtype=np.float64)
    te_arr = np.atleast_1d(np.asarray(teval, dtype=np.float64))
    cdef double[::1] te = np.ascontiguousarray(te_arr)
    out_arr = np.zeros(te_arr.shape[0])
    cdef double[::1] out = out_arr
    cdef Py_ssize_t nq = p.shape[0], npts = tp.shape[0], nt = te.shape[0]
    cdef Py_ssize_t j, i, k
    cdef bint tel = bool(telescoped), hold = bool(hold_last)
    cdef double complex pj, rj, acc, E, rk
    cdef double t, tau, slope
    for k in range(nt):
        t = te[k]
        acc = 0.0
        for j in range(nq):
            pj = p[j]
            rj = r[j]
            for i in range(npts - 1):
                if t < tp[i]:
                    break
                slope = (vp[i + 1] - vp[i]) / (tp[i + 1] - tp[i])
                rk = rj * slope
                tau = t - tp[i]
                E = _expc_fast(pj.real * tau, pj.imag * tau)
                acc = acc + rk * tau + (rk / pj) * (1.0 - E)
                if not tel:
                    acc = acc + rj * vp[i] * (1.0 - E)
                if t >= tp[i + 1]:
                    tau = t - tp[i + 1]
                    E = _expc_fast(pj.real * tau, pj.imag * tau)
                    acc = acc - (rk * tau + (rk / pj) * (1.0 - E))
                    if not tel:
                        acc = acc - rj * vp[i + 1] * (1.0 - E)
            if t >= tp[0]:
                tau = t - tp[0]
                E = _expc_fast(pj.real * tau, pj.imag * tau)
                if tel:
                    acc = acc + rj * vp[0] * (1.0 - E)
            if t >= tp[npts - 1]:
                tau = t - tp[npts - 1]
                E = _expc_fast(pj.real * tau, pj.imag * tau)
                if tel:
                    if not hold:
                        acc = acc - rj * vp[npts - 1] * (1.0 - E)
                else:
                    if hold:
                        acc = acc + rj * vp[npts - 1] * (1.0 - E)
        out[k] = acc.real
    return out_arr


def pwl_state_init(nterms):
    return np.zeros(nterms, dtype=np.complex128)


def pwl_state_eval(poles, residues, state, double v0, double slope, double dt):
    cdef double complex[::1] p = np.ascontiguousarray(poles, dtype=np.complex128)
    cdef double complex[::1] r = np.ascontiguousarray(residues, dtype=np.complex128)
    cdef double complex[::1] s = np.ascontiguousarray(state, dtype=np.complex128)
    cdef Py_ssize_t j, nq = p.shape[0]
    cdef double complex acc = 0.0, E, rk
    for j in range(nq):
        E = _expc_fast(p[j].real * dt, p[j].imag * dt)
        rk = r[j] * slope
        acc = acc + E * s[j] + r[j] * v0 * (1.0 - E) + rk * dt + (rk / p[j]) * (1.0 - E)
    return acc.real


def pwl_state_advance(poles, residues, state, double v0, double slope, double dt):
    cdef double complex[::1] p = np.ascontiguousarray(poles, dtype=np.complex128)
    cdef double complex[::1] r = np.ascontiguousarray(residues, dtype=np.complex128)
    cdef double complex[::1] s = np.ascontiguousarray(state, dtype=np.complex128)
    out_arr = np.empty(p.shape[0], dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t j
    cdef double complex E, rk
    for j in range(p.shape[0]):
        E = _expc_fast(p[j].real * dt, p[j].imag * dt)
        rk = r[j] * slope
        out[j] = E * s[j] + r[j] * v0 * (1.0 - E) + rk * dt + (rk / p[j]) * (1.0 - E)
    return out_arr


def convolution_currents(poles, residues, vsamp, double dt):
    cdef double complex[::1] p = np.ascontiguousarray(poles, dtype=np.complex128)
    cdef double complex[::1] r = np.ascontiguousarray(residues, dtype=np.complex128)
    cdef double[::1] v = np.ascontiguousarray(vsamp, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], j, k
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef double complex E, acc, coef
    cdef double pmag
    for j in range(p.shape[0]):
        pmag = abs(p[j])
        if pmag * dt > 1e6:
            for k in range(n):
                out[k] += (r[j] * v[k]).real
            continue
        E = _expc_fast(p[j].real * dt, p[j].imag * dt)
        coef = -r[j] * p[j]
        acc = 0.0
        for k in range(1, n):
            acc = E * acc + 0.5 * dt * (E * v[k - 1] + v[k])
            out[k] += (coef * acc).real
    return out_arr
