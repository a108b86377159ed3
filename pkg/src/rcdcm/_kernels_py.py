"""Pure numpy implementation of the hot evaluation kernels.

Mirrors the API of the compiled module `_kernels_cy`; the active backend
is chosen in `_kernels`.  All functions take pole/residue arrays as
complex128 and return real currents (imaginary parts cancel for
conjugate-symmetric term lists).

Exponentials appear only with nonpositive real exponents; products with
1/pole are arranged so ultra-fast (clamped feedthrough) poles reduce to
their direct-conduction limit without overflow.
"""

import numpy as np

BACKEND = "python"

_EXP_FLOOR = -700.0  # exp underflow clamp on the real exponent


def _expc(z):
    """exp(z) with the real part clamped below to avoid spurious underflow FP errors."""
    z = np.asarray(z)
    re = np.clip(z.real, _EXP_FLOOR, 0.0)
    if np.iscomplexobj(z):
        return np.exp(re + 1j * z.imag)
    return np.exp(re)


def eval_pwl_current(poles, residues, tpts, vpts, teval, telescoped=True, hold_last=True):
    """Closed-form current of a pole-residue admittance driven by a PWL voltage.

    tpts/vpts are the breakpoints (M+1 of them for M segments), teval the
    query times.  `telescoped` selects the collapsed step-term form (only
    the first/last breakpoints carry step terms); `hold_last=False` keeps
    the literal drop-to-zero semantics after the final breakpoint.
    """
    tpts = np.asarray(tpts, dtype=float)
    vpts = np.asarray(vpts, dtype=float)
    teval = np.atleast_1d(np.asarray(teval, dtype=float))
    out = np.zeros(len(teval))
    nseg = len(tpts) - 1
    if nseg < 0:
        return out
    dt_seg = np.diff(tpts)
    slopes = np.diff(vpts) / dt_seg if nseg else np.zeros(0)

    el_start = teval[:, None] - tpts[None, :-1] if nseg else np.zeros((len(teval), 0))
    el_end = teval[:, None] - tpts[None, 1:] if nseg else np.zeros((len(teval), 0))
    u_start = el_start >= 0.0
    u_end = el_end >= 0.0
    el0 = teval - tpts[0]
    elN = teval - tpts[-1]
    u0 = el0 >= 0.0
    uN = elN >= 0.0

    acc = np.zeros(len(teval), dtype=complex)
    for p, r in zip(np.asarray(poles, dtype=complex), np.asarray(residues, dtype=complex)):
        Es = _expc(p * np.where(u_start, el_start, 0.0))
        Ee = _expc(p * np.where(u_end, el_end, 0.0))
        rk = r * slopes
        # (r k / p)(p tau - e^{p tau} + 1) written overflow-safe for huge |p|
        ramp = (rk * np.where(u_start, el_start, 0.0) + (rk / p) * (1.0 - Es)) * u_start
        ramp -= (rk * np.where(u_end, el_end, 0.0) + (rk / p) * (1.0 - Ee)) * u_end
        acc += ramp.sum(axis=1)
        E0 = _expc(p * np.where(u0, el0, 0.0))
        EN = _expc(p * np.where(uN, elN, 0.0))
        if telescoped:
            step = r * vpts[0] * (1.0 - E0) * u0
            if not hold_last:
                step -= r * vpts[-1] * (1.0 - EN) * uN
        else:
            step = (r * vpts[:-1] * (1.0 - Es) * u_start).sum(axis=1)
            step -= (r * vpts[1:] * (1.0 - Ee) * u_end).sum(axis=1)
            if hold_last:
                step += r * vpts[-1] * (1.0 - EN) * uN
        acc += step
    out[:] = acc.real
    return out


def pwl_state_init(nterms):
    """Per-term current state at the last committed breakpoint."""
    return np.zeros(nterms, dtype=complex)


def pwl_state_eval(poles, residues, state, v0, slope, dt):
    """Current dt after the committed breakpoint, on a tentative segment.

    v0 is the committed breakpoint voltage, slope the tentative segment
    slope.  Pure function of the state; does not commit.
    """
    E = _expc(np.asarray(poles) * dt)
    rk = np.asarray(residues) * slope
    term = E * state + np.asarray(residues) * v0 * (1.0 - E) + rk * dt + (rk / np.asarray(poles)) * (1.0 - E)
    return float(term.sum().real)


def pwl_state_advance(poles, residues, state, v0, slope, dt):
    """Commit a segment: returns the per-term state at the new breakpoint."""
    poles = np.asarray(poles)
    residues = np.asarray(residues)
    E = _expc(poles * dt)
    rk = residues * slope
    return E * state + residues * v0 * (1.0 - E) + rk * dt + (rk / poles) * (1.0 - E)


def convolution_currents(poles, residues, vsamp, dt):
    """Trapezoidal quadrature of i = -sum_j res_j pole_j int e^{p(t-tau)} v dtau.

    Second-order accurate; poles with |p| dt huge are direct-conduction
    terms and use the analytic limit res * v(t).
    """
    vsamp = np.asarray(vsamp, dtype=float)
    n = len(vsamp)
    out = np.zeros(n)
    for p, r in zip(np.asarray(poles, dtype=complex), np.asarray(residues, dtype=complex)):
        if abs(p) * dt > 1e6:
            out += (r * vsamp).real
            continue
        E = np.exp(p * dt)
        acc = 0.0 + 0.0j
        contrib = np.empty(n, dtype=complex)
        contrib[0] = 0.0
        for k in range(1, n):
            acc = E * acc + 0.5 * dt * (E * vsamp[k - 1] + vsamp[k])
            contrib[k] = acc
        out += (-r * p * contrib).real
    return out
