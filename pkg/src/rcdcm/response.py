"""Piecewise-linear excitations and the closed-form RC current response.

For an admittance in pole-residue form, the current under a PWL voltage
has an exact algebraic expression: each segment contributes a ramp term
(res k / pole)(pole (t-t_i) - e^{pole (t-t_i)} + 1) and a step term
res v (1 - e^{pole (t-t_i)}).  Interior step terms cancel between
adjacent segments, leaving only the endpoints (the collapsed form).  Two
independent reference paths are kept for validation: trapezoidal
convolution quadrature and numerical inverse Laplace (fixed Talbot).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import PreconditionError

_REL_POLE_DT = 0.1  # convolution resolves a pole only if |p| dt <= this
_FAST_POLE_DT = 1e6  # beyond this |p| dt the term is direct conduction


@dataclass(frozen=True)
class PwlWaveform:
    """Connected linear segments; holds the first/last value outside the span."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) == 0:
            raise PreconditionError("waveform needs matching 1-d time/value arrays")
        if len(t) > 1 and not np.all(np.diff(t) > 0.0):
            raise PreconditionError("breakpoint times must be strictly increasing")
        if t[0] < 0.0:
            raise PreconditionError("first breakpoint must be at t >= 0")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise PreconditionError("waveform contains non-finite entries")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_points(cls, points):
        pts = np.asarray(points, dtype=float)
        return cls(times=pts[:, 0], values=pts[:, 1])

    @property
    def slopes(self):
        if len(self.times) < 2:
            return np.zeros(0)
        return np.diff(self.values) / np.diff(self.times)

    def value(self, t):
        return np.interp(t, self.times, self.values)

    def masked_value(self, t):
        """Eq.-14-style sampling: zero before the first breakpoint, held after the last."""
        t = np.asarray(t, dtype=float)
        return np.where(t < self.times[0], 0.0, np.interp(t, self.times, self.values))

    def shifted(self, dt):
        return PwlWaveform(times=self.times + dt, values=self.values.copy())

    def scaled(self, a):
        return PwlWaveform(times=self.times.copy(), values=a * self.values)

    def appended(self, t, v):
        return PwlWaveform(
            times=np.append(self.times, t), values=np.append(self.values, v)
        )


@dataclass(frozen=True)
class PwlLaplace:
    """Coefficient form of V(s) = sum (k/s^2 + v_i/s)e^{-s t_i} - (k/s^2 + v_{i+1}/s)e^{-s t_{i+1}}."""

    segments: tuple  # (k, t_start, v_start, t_end, v_end) per segment

    def eval(self, s):
        s = complex(s)
        acc = 0.0 + 0.0j
        for k, t0, v0, t1, v1 in self.segments:
            acc += (k / s**2 + v0 / s) * np.exp(-s * t0)
            acc -= (k / s**2 + v1 / s) * np.exp(-s * t1)
        return acc

    def eval_collapsed(self, s):
        """Same value with interior step terms telescoped away."""
        s = complex(s)
        acc = 0.0 + 0.0j
        for k, t0, _v0, t1, _v1 in self.segments:
            acc += (k / s**2) * (np.exp(-s * t0) - np.exp(-s * t1))
        if self.segments:
            k, t0, v0, _t, _v = self.segments[0]
            acc += (v0 / s) * np.exp(-s * t0)
            _k, _t0, _v0, tN, vN = self.segments[-1]
            acc -= (vN / s) * np.exp(-s * tN)
        return acc


def laplace_of_pwl(w):
    """Frequency-domain coefficient structure of a PWL waveform."""
    t, v = w.times, w.values
    if len(t) == 1:
        return PwlLaplace(segments=((0.0, float(t[0]), float(v[0]), float(t[0]) + 1.0, float(v[0])),))
    ks = w.slopes
    segs = tuple(
        (float(ks[i]), float(t[i]), float(v[i]), float(t[i + 1]), float(v[i + 1]))
        for i in range(len(t) - 1)
    )
    return PwlLaplace(segments=segs)


def eval_current(ya, w, t, telescoped=True, hold_last=True):
    """Exact current at time(s) t for admittance `ya` driven by waveform `w`.

    The excitation follows the waveform mask: zero before the first
    breakpoint (with a step there if the first value is nonzero) and, by
    default, held at the final value afterwards.
    """
    single = np.ndim(t) == 0
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    tp = w.times
    vp = w.values
    if len(tp) == 1:
        tp = np.array([tp[0], tp[0] + 1.0])
        vp = np.array([vp[0], vp[0]])
    out = _kernels.eval_pwl_current(
        ya.poles, ya.residues, tp, vp, t_arr, telescoped=telescoped, hold_last=hold_last
    )
    return float(out[0]) if single else out


class ClosedFormResponse:
    """Incrementally built response: appending a segment is O(q).

    Keeps the per-term current state at the last committed breakpoint, so
    the DCM loop can evaluate tentative segment endpoints and commit the
    matched one without re-summing the whole excitation history.
    """

    def __init__(self, ya, t0=0.0, v0=0.0):
        if v0 != 0.0:
            raise PreconditionError("incremental responses must start from zero excitation")
        self.ya = ya
        self._state = _kernels.pwl_state_init(len(ya.poles))
        self._times = [float(t0)]
        self._values = [float(v0)]

    @property
    def times(self):
        return np.array(self._times)

    @property
    def values(self):
        return np.array(self._values)

    def waveform(self):
        return PwlWaveform(times=self.times, values=self.values)

    def tentative_current(self, t, v):
        """Current at (t, v) if a segment from the last breakpoint were appended."""
        t0, v0 = self._times[-1], self._values[-1]
        dt = t - t0
        if dt < 0.0:
            raise PreconditionError("tentative time precedes the committed front")
        if dt == 0.0:
            return float(np.sum(self._state).real)
        slope = (v - v0) / dt
        return _kernels.pwl_state_eval(
            self.ya.poles, self.ya.residues, self._state, v0, slope, dt
        )

    def append(self, t, v):
        t0, v0 = self._times[-1], self._values[-1]
        dt = t - t0
        if dt <= 0.0:
            raise PreconditionError("breakpoints must advance strictly in time")
        slope = (v - v0) / dt
        self._state = _kernels.pwl_state_advance(
            self.ya.poles, self.ya.residues, self._state, v0, slope, dt
        )
        self._times.append(float(t))
        self._values.append(float(v))

    def current_now(self):
        return float(np.sum(self._state).real)

    def sample(self, t):
        """Full re-evaluation for arbitrary times (delegates to eval_current)."""
        return eval_current(self.ya, self.waveform(), t)


def convolution_reference(ya, w, t_grid, dt):
    """Numerical convolution oracle on a uniform grid, sampled at t_grid.

    Trapezoidal quadrature of i = -sum res_j pole_j int_0^t e^{p (t-tau)} v(tau) dtau,
    the rearrangement of the convolution integral for the pole-residue kernel.
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if dt <= 0.0:
        raise PreconditionError("dt must be positive")
    pd = np.abs(ya.poles) * dt
    bad = (pd > _REL_POLE_DT) & (pd < _FAST_POLE_DT)
    if np.any(bad):
        worst = np.abs(ya.poles[bad]).max()
        raise PreconditionError(
            f"dt={dt:.3e} too coarse for pole magnitude {worst:.3e} (need dt <= {_REL_POLE_DT/worst:.3e})"
        )
    t_end = max(t_grid.max(), w.times[-1])
    n = int(np.ceil(t_end / dt)) + 1
    ts = np.arange(n + 1) * dt
    vs = w.masked_value(ts)
    cur = _kernels.convolution_currents(ya.poles, ya.residues, vs, dt)
    return np.interp(t_grid, ts, cur)


def _talbot(F, t, m=24):
    """Fixed-Talbot inverse Laplace transform of F at time t > 0."""
    if t <= 0.0:
        return 0.0
    r = 2.0 * m / (5.0 * t)
    theta = np.pi * np.arange(1, m) / m
    cot = 1.0 / np.tan(theta)
    s = r * theta * (cot + 1j)
    sigma = theta + (theta * cot - 1.0) * cot
    acc = 0.5 * (np.exp(r * t) * F(complex(r, 0.0))).real
    for sk, sg in zip(s, sigma):
        acc += (np.exp(sk * t) * F(sk) * (1.0 + 1j * sg)).real
    return float((r / m) * acc)


def inverse_laplace_reference(ya, w, t, m=24):
    """Numerical inverse Laplace of V(s) Y(s); slow benchmark reference only.

    Each delayed PWL component (k/s^2 + v/s)e^{-s t_c} is inverted on its
    own shifted time axis so the Talbot contour never sees a growing
    exponential.  Hold-last semantics match eval_current.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    single = np.isscalar(t) or getattr(t, "ndim", 1) == 0
    lap = laplace_of_pwl(w)

    def Y(s):
        return np.sum(ya.residues / (1.0 - s / ya.poles))

    # (sign, delay, k, v) components; trailing hold cancels the final step-down
    comps = []
    for k, t0, v0, t1, v1 in lap.segments:
        comps.append((+1.0, t0, k, v0))
        comps.append((-1.0, t1, k, v1))
    if lap.segments:
        _k, _t0, _v0, tN, vN = lap.segments[-1]
        comps.append((+1.0, tN, 0.0, vN))

    out = np.zeros(len(t_arr))
    for sign, delay, k, v in comps:
        if k == 0.0 and v == 0.0:
            continue

        def F(s, k=k, v=v):
            return (k / s**2 + v / s) * Y(s)

        for i, ti in enumerate(t_arr):
            tau = ti - delay
            if tau > 0.0:
                out[i] += sign * _talbot(F, tau, m)
    return float(out[0]) if single else out


def write_waveform_csv(path, t, v, i):
    """CSV export: header t_s,v_V,i_A, full double precision."""
    with open(path, "w") as fh:
        fh.write("t_s,v_V,i_A\n")
        for tk, vk, ik in zip(t, v, i):
            fh.write(f"{tk!r},{vk!r},{ik!r}\n")
