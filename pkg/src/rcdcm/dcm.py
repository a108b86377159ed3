"""Dynamic capacitance matching: the core current-response algorithm.

The output voltage is stepped in equal levels across the supply.  At each
level a binary search over the characterization grid finds the fixed-cap
curve whose library current agrees with the closed-form RC current of the
PWL built so far plus the tentative segment; smaller capacitance means a
steeper segment and more RC current, which orients the search.  The
matched, non-monotonic over/undershoot region and the final settling tail
are grabbed from the library curves of the first and last matched
capacitances and time-aligned onto the stepped region.

Falling transitions run on the mirrored table (w = vdd - v, currents
negated): for a network at rest that is exact superposition; networks
with DC paths to ground would need the static offset and are out of scope
here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CoverageError, PreconditionError, VoltageNotReachedError
from .response import ClosedFormResponse, PwlWaveform, eval_current

_JOIN_TOL_VOLTS = 1e-3


@dataclass(frozen=True)
class DcmConfig:
    n_steps: int = 100
    tolerance: float = 0.01  # relative to max(|i_lib|, running peak)
    max_iters: int | None = None  # per-step search budget; default log2(grid)+2
    span_start: float = 0.01
    span_end: float = 0.99
    crossing: str = "incremental"  # or "absolute"

    def __post_init__(self):
        if self.n_steps < 10:
            raise PreconditionError("n_steps must be at least 10")
        if not 0.0 < self.tolerance < 0.2:
            raise PreconditionError("tolerance must lie in (0, 0.2)")
        if not 0.0 < self.span_start < self.span_end < 1.0:
            raise PreconditionError("voltage span must satisfy 0 < start < end < 1")
        if self.crossing not in ("incremental", "absolute"):
            raise PreconditionError("crossing must be incremental or absolute")

    def budget(self, grid_size):
        if self.max_iters is not None:
            return self.max_iters
        return math.ceil(math.log2(max(grid_size, 2))) + 2


@dataclass
class DcmTrace:
    """Per-step matched records plus the stitched head/tail samples."""

    step_t: np.ndarray
    step_v: np.ndarray
    step_i: np.ndarray
    step_c: np.ndarray
    step_residual: np.ndarray
    c_eff_first: float
    c_eff_last: float
    response: ClosedFormResponse
    config: DcmConfig
    vdd: float
    direction: str = "rising"
    head_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    head_v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    head_i: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail_v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail_i: np.ndarray = field(default_factory=lambda: np.zeros(0))
    meta: dict = field(default_factory=dict)

    def voltage_pwl(self):
        """Stitched output voltage through every matched record."""
        t = np.concatenate([self.head_t, self.step_t, self.tail_t])
        v = np.concatenate([self.head_v, self.step_v, self.tail_v])
        if self.direction == "falling":
            v = self.vdd - v
        return PwlWaveform(times=t, values=v)

    def current_samples(self, min_per_segment=8):
        """(t, i) with the stepped region re-sampled from the closed form."""
        ts = [self.head_t]
        cs = [self.head_i]
        times = self.step_t
        prev = self.meta["t_origin"]
        seg_t = []
        for k, tk in enumerate(times):
            n = min_per_segment
            seg = np.linspace(prev, tk, n + 1)[1:]
            seg_t.append(seg)
            prev = tk
        seg_t = np.concatenate(seg_t) if seg_t else np.zeros(0)
        wave = self.response.waveform()
        seg_i = eval_current(self.response.ya, wave, seg_t)
        ts.append(seg_t)
        cs.append(seg_i)
        ts.append(self.tail_t)
        cs.append(self.tail_i)
        t = np.concatenate(ts)
        i = np.concatenate(cs)
        if self.direction == "falling":
            i = -i
        return t, i

    def waveforms(self):
        """(t, v, i) merged samples of the full stitched result."""
        pwl = self.voltage_pwl()
        t, i = self.current_samples()
        v = pwl.value(t)
        return t, v, i


class _CurveCache:
    """Per-run memo of interpolated curves and their monotone-region data."""

    def __init__(self, table):
        self.table = table
        self._store = {}

    def rows(self, c):
        hit = self._store.get(c)
        if hit is None:
            v, i = self.table.curve(c)
            m0 = self.table.monotone_start(c)
            hit = (v, i, m0)
            self._store[c] = hit
        return hit

    def crossing_time(self, c, level):
        v, _i, m0 = self.rows(c)
        t = self.table.time_grid
        seg = v[m0:]
        if level < seg[0] - 1e-15:
            raise VoltageNotReachedError(f"level {level:.4g} below undershoot floor")
        if level > seg[-1]:
            raise VoltageNotReachedError(f"level {level:.4g} never reached on C={c:.3e}")
        k = int(np.searchsorted(seg, level))
        if k == 0:
            return float(t[m0])
        s0, s1 = seg[k - 1], seg[k]
        t0, t1 = t[m0 + k - 1], t[m0 + k]
        if s1 == s0:
            return float(t0)
        return float(t0 + (level - s0) / (s1 - s0) * (t1 - t0))

    def current_at(self, c, t):
        _v, i, _m0 = self.rows(c)
        return float(np.interp(t, self.table.time_grid, i, right=0.0))


def _rising_view(table):
    """Mirror a falling table into rising coordinates (w = vdd - v, i -> -i)."""
    return replace(
        table,
        direction="rising",
        currents=-table.currents,
        voltages=table.vdd - table.voltages,
    )


def dcm_match(table, ya, cfg=None):
    """Match a capacitance per voltage step; returns the unstitched trace."""
    cfg = cfg or DcmConfig()
    direction = table.direction
    if direction == "falling":
        table = _rising_view(table)
    vdd = table.vdd
    grid = np.asarray(table.cap_grid, dtype=float)
    cache = _CurveCache(table)

    n = cfg.n_steps
    k_lo = max(1, round(cfg.span_start * n))
    k_hi = round(cfg.span_end * n)
    levels = vdd * np.arange(k_lo, k_hi + 1) / n
    if len(levels) < 2:
        raise PreconditionError("voltage span leaves fewer than two steps")

    budget = cfg.budget(len(grid))
    resp = None
    t_origin = 0.0
    t_prev = 0.0
    v_prev = 0.0
    i_peak = 0.0
    rec_t, rec_v, rec_i, rec_c, rec_r = [], [], [], [], []
    exhausted = 0
    fallback_abs = 0

    for step, v_k in enumerate(levels):

        def mismatch(c):
            t_cross = cache.crossing_time(c, v_k)
            if resp is None:
                dt = t_cross - cache.crossing_time(c, v_prev)
                i_rc = _segment_current(ya, v_prev, v_k, dt)
            else:
                if cfg.crossing == "absolute" and t_cross > t_prev:
                    dt = t_cross - t_prev
                else:
                    dt = t_cross - cache.crossing_time(c, v_prev)
                if dt <= 0.0:
                    dt = table.dt * 1e-3  # degenerate flat spot; keep time advancing
                i_rc = resp.tentative_current(t_prev + dt, v_k)
            i_lib = cache.current_at(c, t_cross)
            return i_rc - i_lib, i_lib, dt

        accepted = None  # (c, f, i_lib, dt)
        evals = {}

        def probe(c):
            if c not in evals:
                evals[c] = mismatch(c)
            return evals[c]

        lo, hi = 0, len(grid) - 1
        for _ in range(budget):
            mid = (lo + hi) // 2
            f, i_lib, dt = probe(grid[mid])
            ref = max(abs(i_lib), i_peak)
            # a grid point this close to the root needs no refinement
            if abs(f) <= 1e-3 * cfg.tolerance * ref:
                accepted = (grid[mid], f, i_lib, dt)
                break
            if f < 0.0:
                # RC current too small: steepen the segment, smaller C
                if hi == mid:
                    break
                hi = mid
            else:
                if lo == mid:
                    break
                lo = mid
            if hi - lo <= 1:
                break

        if accepted is None:
            # refine to the crossing between the bracketing grid curves:
            # stopping anywhere inside the tolerance band would let C_step
            # wander by a band-width between consecutive steps
            f_lo, il_lo, _ = probe(grid[lo])
            f_hi, il_hi, _ = probe(grid[hi])
            if f_lo * f_hi < 0.0:
                c_a, f_a, c_b, f_b = grid[lo], f_lo, grid[hi], f_hi
                best = None
                for _ in range(8):
                    c_m = c_a - f_a * (c_b - c_a) / (f_b - f_a)
                    if not (min(c_a, c_b) < c_m < max(c_a, c_b)):
                        c_m = 0.5 * (c_a + c_b)
                    f_m, i_lib, dt = probe(c_m)
                    ref = max(abs(i_lib), i_peak)
                    if best is None or abs(f_m) < abs(best[1]):
                        best = (c_m, f_m, i_lib, dt)
                    if abs(f_m) <= 1e-3 * cfg.tolerance * ref:
                        break
                    if f_a * f_m < 0.0:
                        c_b, f_b = c_m, f_m
                    else:
                        c_a, f_a = c_m, f_m
                if best is not None and abs(best[1]) <= cfg.tolerance * max(
                    abs(best[2]), i_peak
                ):
                    accepted = best

        if accepted is None:
            # search exhausted (or the slope-monotonicity assumption failed):
            # exhaustive scan, then take the best bracket or the best point
            for c in grid:
                probe(c)
            best_pair = None
            gvals = [evals[c][0] for c in grid]
            for j in range(len(grid) - 1):
                if gvals[j] * gvals[j + 1] < 0.0:
                    score = min(abs(gvals[j]), abs(gvals[j + 1]))
                    if best_pair is None or score < best_pair[0]:
                        best_pair = (score, j)
            if best_pair is not None:
                j = best_pair[1]
                c_a, f_a = grid[j], gvals[j]
                c_b, f_b = grid[j + 1], gvals[j + 1]
                for _ in range(6):
                    c_m = c_a - f_a * (c_b - c_a) / (f_b - f_a)
                    if not (min(c_a, c_b) < c_m < max(c_a, c_b)):
                        c_m = 0.5 * (c_a + c_b)
                    f_m, i_lib, dt = probe(c_m)
                    if f_a * f_m < 0.0:
                        c_b, f_b = c_m, f_m
                    else:
                        c_a, f_a = c_m, f_m
                c_best = c_m
            else:
                c_best = min(grid, key=lambda c: abs(evals[c][0]))
            f, i_lib, dt = probe(c_best)
            accepted = (c_best, f, i_lib, dt)
            exhausted += 1

        c_step, f, i_lib, dt = accepted
        if resp is None:
            t_origin = cache.crossing_time(c_step, v_prev)
            t_prev = t_origin
            resp = ClosedFormResponse(ya, t0=t_origin, v0=0.0)
        if cfg.crossing == "absolute":
            t_abs = cache.crossing_time(c_step, v_k)
            if t_abs <= t_prev:
                fallback_abs += 1
        t_k = t_prev + dt
        i_k = i_lib + f  # the RC-side current at acceptance
        resp.append(t_k, v_k)
        rec_t.append(t_k)
        rec_v.append(v_k)
        rec_i.append(i_k)
        rec_c.append(c_step)
        ref = max(abs(i_lib), i_peak, 1e-300)
        rec_r.append(abs(f) / ref)
        i_peak = max(i_peak, abs(i_k))
        t_prev, v_prev = t_k, v_k

    return DcmTrace(
        step_t=np.array(rec_t),
        step_v=np.array(rec_v),
        step_i=np.array(rec_i),
        step_c=np.array(rec_c),
        step_residual=np.array(rec_r),
        c_eff_first=float(rec_c[0]),
        c_eff_last=float(rec_c[-1]),
        response=resp,
        config=cfg,
        vdd=vdd,
        direction=direction,
        meta={
            "t_origin": t_origin,
            "exhausted_steps": exhausted,
            "absolute_fallbacks": fallback_abs,
            "levels": (k_lo, k_hi, n),
        },
    )


def _segment_current(ya, v0, v1, dt):
    """Closed-form current at the end of a lone segment (0,v0)->(dt,v1)."""
    if dt <= 0.0:
        raise VoltageNotReachedError("segment duration must be positive")
    w = PwlWaveform(times=np.array([0.0, dt]), values=np.array([v0, v1]))
    return eval_current(ya, w, dt)


def stitch_head(trace, table):
    """Replace the pre-span waveform with the first matched curve's head."""
    if table.direction == "falling":
        table = _rising_view(table)
    c1 = trace.c_eff_first
    v_row, i_row = table.curve(c1)
    v1 = trace.step_v[0]
    t1 = trace.step_t[0]
    cache = _CurveCache(table)
    t_cross = cache.crossing_time(c1, v1)
    shift = t1 - t_cross
    tg = table.time_grid
    keep = (tg + shift >= 0.0) & (tg + shift < t1 - 1e-3 * table.dt) & (tg <= t_cross)
    head_t = tg[keep] + shift
    head_v = v_row[keep]
    head_i = i_row[keep]
    if len(head_v) and abs(table.voltage_of(c1, t_cross) - v1) > _JOIN_TOL_VOLTS:
        raise PreconditionError("head stitch discontinuity exceeds 1 mV")
    trace.head_t = head_t
    trace.head_v = head_v
    trace.head_i = head_i
    trace.meta["head_shift"] = shift
    return trace


def stitch_tail(trace, table):
    """Append the last matched curve from its own end-level crossing onward."""
    if table.direction == "falling":
        table = _rising_view(table)
    cn = trace.c_eff_last
    v_row, i_row = table.curve(cn)
    v_end = trace.step_v[-1]
    t_end = trace.step_t[-1]
    cache = _CurveCache(table)
    t_cross = cache.crossing_time(cn, v_end)
    shift = t_end - t_cross
    tg = table.time_grid
    keep = tg > t_cross + 1e-3 * table.dt
    trace.tail_t = tg[keep] + shift
    trace.tail_v = v_row[keep]
    trace.tail_i = i_row[keep]
    if len(trace.tail_v) and abs(table.voltage_of(cn, t_cross) - v_end) > _JOIN_TOL_VOLTS:
        raise PreconditionError("tail stitch discontinuity exceeds 1 mV")
    trace.meta["tail_shift"] = shift
    return trace


def baseline_ctotal(table, c_total):
    """Single fixed-capacitance comparator: the library curve at C_total."""
    if c_total > table.c_max * (1 + 1e-9):
        raise CoverageError(
            f"C_total={c_total:.3e} beyond characterized maximum {table.c_max:.3e}"
        )
    v, i = table.curve(c_total)
    return table.time_grid.copy(), v.copy(), i.copy()


@dataclass(frozen=True)
class MetricSet:
    avg: float
    avg_abs: float
    rms: float
    peak: float

    def as_dict(self):
        return {
            "avg_A": self.avg,
            "avg_abs_A": self.avg_abs,
            "rms_A": self.rms,
            "peak_A": self.peak,
        }


def compute_metrics(t, i, window=None):
    """Signed/absolute average, RMS and peak |current| over the window."""
    t = np.asarray(t, dtype=float)
    i = np.asarray(i, dtype=float)
    if window is None:
        t0, t1 = float(t[0]), float(t[-1])
    else:
        t0, t1 = window
    if not t1 > t0:
        raise PreconditionError("metrics window must have positive length")
    grid = t[(t > t0) & (t < t1)]
    tt = np.concatenate([[t0], grid, [t1]])
    ii = np.interp(tt, t, i)
    span = t1 - t0
    avg = float(np.trapezoid(ii, tt) / span)
    avg_abs = float(np.trapezoid(np.abs(ii), tt) / span)
    rms = float(np.sqrt(np.trapezoid(ii * ii, tt) / span))
    peak = float(np.abs(ii).max())
    return MetricSet(avg=avg, avg_abs=avg_abs, rms=rms, peak=peak)


def write_trace_csv(path, trace):
    """Table-I-shaped export: step,t_ps,v_V,i_mA,C_step_fF.

    Head samples carry step 0 and the first matched capacitance; tail
    samples carry step M+1 and the last.
    """
    sign = -1.0 if trace.direction == "falling" else 1.0
    vmap = (lambda v: trace.vdd - v) if trace.direction == "falling" else (lambda v: v)
    with open(path, "w") as fh:
        fh.write("step,t_ps,v_V,i_mA,C_step_fF\n")
        for tk, vk, ik in zip(trace.head_t, trace.head_v, trace.head_i):
            fh.write(
                f"0,{tk*1e12!r},{vmap(vk)!r},{sign*ik*1e3!r},{trace.c_eff_first*1e15!r}\n"
            )
        nstep = len(trace.step_t)
        for k in range(nstep):
            fh.write(
                f"{k+1},{trace.step_t[k]*1e12!r},{vmap(trace.step_v[k])!r},"
                f"{sign*trace.step_i[k]*1e3!r},{trace.step_c[k]*1e15!r}\n"
            )
        for tk, vk, ik in zip(trace.tail_t, trace.tail_v, trace.tail_i):
            fh.write(
                f"{nstep+1},{tk*1e12!r},{vmap(vk)!r},{sign*ik*1e3!r},{trace.c_eff_last*1e15!r}\n"
            )
