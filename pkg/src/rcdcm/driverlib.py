"""Driver pre-characterization tables and the behavioral models behind them.

A table holds, for one driver at one input slew and transition direction,
the current into a fixed capacitive load versus time over a grid of load
capacitances (ascending, up to the target net's summed capacitance, with
two sub-5% points because resistive shielding makes early effective
capacitance tiny).  Voltage curves are derived by integrating I = C dV/dt
rather than re-simulated, so the table stays single-sourced.

Two behavioral driver kinds substitute for foundry cells:

* thevenin: ideal ramp source behind a fixed resistance (no over/undershoot);
* mos: saturating pull-up/down current with input-output coupling and
  internal output capacitance, which reproduces the reverse current and
  rail excursion of a fast input edge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import oracle
from .errors import (
    CoverageError,
    NonSettlingError,
    PreconditionError,
    VoltageNotReachedError,
)
from .netlist import assemble_mna, parse_netlist
from .response import PwlWaveform

SETTLE_FRACTION = 0.999
WINDOW_GROWTH_LIMIT = 100.0


def default_cap_grid(c_max, steps=20, sub_points=(0.01, 0.025)):
    """Sub-5% points plus `steps` linear steps of (c_max/steps)."""
    grid = np.concatenate(
        [np.asarray(sub_points) * c_max, np.arange(1, steps + 1) * (c_max / steps)]
    )
    return np.unique(grid)


@dataclass(frozen=True)
class TheveninRampDriver:
    """Ideal ramp source of the given slew behind a series resistance."""

    r_drv: float
    vdd: float
    driver_id: str = "thevenin"
    direction: str = "rising"

    c_couple: float = 0.0
    c_int: float = 0.0

    def __post_init__(self):
        if self.r_drv <= 0 or self.vdd <= 0:
            raise PreconditionError("driver parameters must be positive")
        if self.direction not in ("rising", "falling"):
            raise PreconditionError("direction must be rising or falling")

    def input_for(self, slew):
        ramp = slew / 0.8  # 10-90% definition
        lo, hi = 0.0, self.vdd
        if self.direction == "rising":
            return PwlWaveform(times=np.array([0.0, ramp]), values=np.array([lo, hi]))
        return PwlWaveform(times=np.array([0.0, ramp]), values=np.array([hi, lo]))

    def output_current(self, v_in, v_out):
        g = 1.0 / self.r_drv
        return g * (v_in - v_out), -g

    def rest_voltage(self):
        return 0.0 if self.direction == "rising" else self.vdd

    def effective_resistance(self):
        return self.r_drv

    def for_direction(self, direction):
        return replace(self, direction=direction)

    def spec(self):
        return {"kind": "thevenin", "r_drv": self.r_drv, "vdd": self.vdd,
                "driver": self.driver_id, "direction": self.direction}


@dataclass(frozen=True)
class MosLikeDriver:
    """Saturating pull current I = I_sat * g(v_in) * min(1, v_swing/v_knee).

    g maps the input level to drive strength, zero below the threshold
    fraction and quadratic above it (monotone in the turn-on direction).
    The coupling capacitance injects reverse current while the input
    slews, producing the initial under/overshoot; an inverting input is
    assumed (output rises while the input falls).
    """

    i_sat: float
    v_knee: float
    vdd: float
    c_couple: float = 1.2e-15
    c_int: float = 0.8e-15
    threshold: float = 0.3
    driver_id: str = "mos"
    direction: str = "rising"

    def __post_init__(self):
        if min(self.i_sat, self.v_knee, self.vdd, self.c_couple, self.c_int) <= 0:
            raise PreconditionError("driver parameters must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise PreconditionError("threshold must sit inside (0, 1)")
        if self.direction not in ("rising", "falling"):
            raise PreconditionError("direction must be rising or falling")

    def input_for(self, slew):
        ramp = slew / 0.8
        lo, hi = 0.0, self.vdd
        if self.direction == "rising":  # inverting: output rises as input falls
            return PwlWaveform(times=np.array([0.0, ramp]), values=np.array([hi, lo]))
        return PwlWaveform(times=np.array([0.0, ramp]), values=np.array([lo, hi]))

    def _strength(self, x):
        lin = (x - self.threshold) / (1.0 - self.threshold)
        return min(max(lin, 0.0), 1.0) ** 2

    def output_current(self, v_in, v_out):
        if self.direction == "rising":
            g = self._strength((self.vdd - v_in) / self.vdd)
            swing = self.vdd - v_out
            if swing >= self.v_knee:
                return self.i_sat * g, 0.0
            return self.i_sat * g * swing / self.v_knee, -self.i_sat * g / self.v_knee
        g = self._strength(v_in / self.vdd)
        swing = v_out
        if swing >= self.v_knee:
            return -self.i_sat * g, 0.0
        return -self.i_sat * g * swing / self.v_knee, -self.i_sat * g / self.v_knee

    def rest_voltage(self):
        return 0.0 if self.direction == "rising" else self.vdd

    def effective_resistance(self):
        return self.v_knee / self.i_sat

    def for_direction(self, direction):
        return replace(self, direction=direction)

    def spec(self):
        return {
            "kind": "mos",
            "i_sat": self.i_sat,
            "v_knee": self.v_knee,
            "vdd": self.vdd,
            "c_couple": self.c_couple,
            "c_int": self.c_int,
            "threshold": self.threshold,
            "driver": self.driver_id,
            "direction": self.direction,
        }


def model_from_spec(data):
    kind = data.get("kind")
    if kind == "thevenin":
        return TheveninRampDriver(
            r_drv=data["r_drv"],
            vdd=data["vdd"],
            driver_id=data.get("driver", "thevenin"),
            direction=data.get("direction", "rising"),
        )
    if kind == "mos":
        return MosLikeDriver(
            i_sat=data["i_sat"],
            v_knee=data["v_knee"],
            vdd=data["vdd"],
            c_couple=data.get("c_couple", 1.2e-15),
            c_int=data.get("c_int", 0.8e-15),
            threshold=data.get("threshold", 0.3),
            driver_id=data.get("driver", "mos"),
            direction=data.get("direction", "rising"),
        )
    raise PreconditionError(f"unknown driver kind {kind!r}")


@dataclass(frozen=True)
class DriverCharTable:
    """Per-(driver, slew, direction) current responses over a capacitance grid.

    currents[i, k] is the current into cap_grid[i] at time_grid[k], sign
    positive into the load; voltages are the running integral / C.  Past a
    curve's own settle point the current reads zero (the unstored tail
    carries at most 0.1% of the total charge).
    """

    driver: str
    vdd: float
    slew: float
    direction: str
    cap_grid: np.ndarray
    time_grid: np.ndarray
    currents: np.ndarray  # (n_caps, n_t)
    voltages: np.ndarray  # (n_caps, n_t)
    meta: dict = field(default_factory=dict)

    @property
    def c_max(self):
        return float(self.cap_grid[-1])

    @property
    def dt(self):
        return float(self.time_grid[1] - self.time_grid[0])

    @property
    def window(self):
        return float(self.time_grid[-1])

    def validate(self):
        g = self.cap_grid
        if not np.all(np.diff(g) > 0):
            raise PreconditionError("cap grid must be strictly ascending")
        if len(g) > 1 and np.diff(g).max() > 0.05 * g[-1] * (1 + 1e-9):
            raise PreconditionError("cap grid resolution coarser than 5% of C_max")
        rising = self.direction == "rising"
        for i, c in enumerate(g):
            q = np.trapezoid(self.currents[i], self.time_grid)
            target = c * self.vdd * (1.0 if rising else -1.0)
            if abs(q - target) > 0.02 * abs(target):
                raise PreconditionError(
                    f"charge conservation off by {abs(q - target)/abs(target):.2%} at C={c:.3e}"
                )
            v_end = self.voltages[i, -1]
            settle = abs(v_end - (self.vdd if rising else 0.0))
            if settle > 0.01 * self.vdd:
                raise PreconditionError(f"curve C={c:.3e} unsettled ({settle:.3g} V off rail)")
            m0 = self.monotone_start(c)
            dv = np.diff(self.voltages[i, m0:])
            if rising and dv.min(initial=0.0) < -1e-6 * self.vdd:
                raise PreconditionError(f"non-monotone post-undershoot region at C={c:.3e}")
            if not rising and dv.max(initial=0.0) > 1e-6 * self.vdd:
                raise PreconditionError(f"non-monotone post-overshoot region at C={c:.3e}")
        return self

    # -- interpolation ----------------------------------------------------

    def _bracket(self, c):
        g = self.cap_grid
        if c < g[0] - 1e-30 or c > g[-1] * (1 + 1e-9):
            raise CoverageError(
                f"C={c:.4e} outside characterized grid [{g[0]:.4e}, {g[-1]:.4e}]"
            )
        c = min(c, g[-1])
        hi = int(np.searchsorted(g, c))
        if hi < len(g) and g[hi] == c:
            return hi, hi, 0.0
        hi = min(max(hi, 1), len(g) - 1)
        lo = hi - 1
        wgt = (c - g[lo]) / (g[hi] - g[lo])
        return lo, hi, wgt

    def curve(self, c):
        """(voltage, current) sample rows at capacitance c (linear blend)."""
        lo, hi, wgt = self._bracket(c)
        if lo == hi:
            return self.voltages[lo], self.currents[lo]
        v = (1 - wgt) * self.voltages[lo] + wgt * self.voltages[hi]
        i = (1 - wgt) * self.currents[lo] + wgt * self.currents[hi]
        return v, i

    def voltage_of(self, c, t):
        v, _ = self.curve(c)
        return self._sample(v, t, edge="hold")

    def current_of(self, c, t):
        _, i = self.curve(c)
        return self._sample(i, t, edge="zero")

    def _sample(self, row, t, edge):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr < 0):
            raise PreconditionError("t must be nonnegative")
        right = row[-1] if edge == "hold" else 0.0
        out = np.interp(t_arr, self.time_grid, row, right=right)
        return float(out[0]) if np.ndim(t) == 0 else out

    def monotone_start(self, c):
        """Index where the post-over/undershoot monotone region begins."""
        v, _ = self.curve(c)
        if self.direction == "rising":
            ref = v.min()
            idx = np.nonzero(v <= ref + 1e-15)[0]
        else:
            ref = v.max()
            idx = np.nonzero(v >= ref - 1e-15)[0]
        return int(idx[-1])

    def time_of_voltage(self, c, v):
        """Unique crossing time of level v on the monotone region of curve c."""
        vr, _ = self.curve(c)
        m0 = self.monotone_start(c)
        sign = 1.0 if self.direction == "rising" else -1.0
        seg = sign * vr[m0:]
        target = sign * v
        if target < seg[0] - 1e-15:
            raise VoltageNotReachedError(
                f"level {v:.4g} below the monotone region floor {sign*seg[0]:.4g}"
            )
        if target > seg[-1]:
            raise VoltageNotReachedError(
                f"level {v:.4g} not reached within the stored window"
            )
        k = int(np.searchsorted(seg, target))
        if k == 0:
            return float(self.time_grid[m0])
        t0, t1 = self.time_grid[m0 + k - 1], self.time_grid[m0 + k]
        s0, s1 = seg[k - 1], seg[k]
        if s1 == s0:
            return float(t0)
        return float(t0 + (target - s0) / (s1 - s0) * (t1 - t0))

    # -- persistence -------------------------------------------------------

    def to_json(self):
        return json.dumps(
            {
                "driver": self.driver,
                "vdd": self.vdd,
                "slew": self.slew,
                "direction": self.direction,
                "cap_grid": self.cap_grid.tolist(),
                "time_grid": self.time_grid.tolist(),
                "current": self.currents.tolist(),
                "meta": self.meta,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        cap = np.asarray(d["cap_grid"], dtype=float)
        tg = np.asarray(d["time_grid"], dtype=float)
        cur = np.asarray(d["current"], dtype=float)
        v0 = 0.0 if d["direction"] == "rising" else float(d["vdd"])
        volt = _integrate_voltages(cap, tg, cur, v0=v0)
        return cls(
            driver=d["driver"],
            vdd=d["vdd"],
            slew=d["slew"],
            direction=d["direction"],
            cap_grid=cap,
            time_grid=tg,
            currents=cur,
            voltages=volt,
            meta=d.get("meta", {}),
        )


def _integrate_voltages(cap_grid, time_grid, currents, v0=0.0):
    q = cumulative_trapezoid(currents, time_grid, axis=1, initial=0.0)
    return v0 + q / np.asarray(cap_grid)[:, None]


def _single_cap_system(c):
    return assemble_mna(parse_netlist(f"Cload port 0 {c!r}", "port"))


def characterize(model, vdd, slew, cap_grid, window, dt):
    """Run the transient oracle on each fixed-capacitor load and build the table.

    The window auto-extends (up to 100x) until the load voltage settles to
    99.9% of the rail; all curves are then resampled onto a shared uniform
    time grid, reading zero past their own settle point.
    """
    cap_grid = np.asarray(cap_grid, dtype=float)
    direction = model.direction
    if not np.all(np.diff(cap_grid) > 0):
        raise PreconditionError("cap grid must be strictly ascending")
    if dt > window / 1000.0:
        raise PreconditionError("dt must resolve the window (dt <= window/1000)")
    if abs(model.vdd - vdd) > 1e-12:
        raise PreconditionError("model vdd disagrees with requested vdd")

    input_wave = model.input_for(slew)
    rising = direction == "rising"
    target = vdd * SETTLE_FRACTION if rising else vdd * (1 - SETTLE_FRACTION)
    raw = []
    max_window = 0.0
    for c in cap_grid:
        sys_ = _single_cap_system(float(c))
        win = window
        while True:
            res = oracle.simulate_driver(sys_, model, input_wave, dt, win)
            # settle judged on the simulated port voltage (equals the load
            # voltage up to the repair drop); the stored voltage is the
            # current integral per the table contract
            settled = res.v_port[-1] >= target if rising else res.v_port[-1] <= target
            if settled:
                break
            win *= 2.0
            if win > WINDOW_GROWTH_LIMIT * window:
                raise NonSettlingError(
                    f"load {c:.3e} F did not settle within {WINDOW_GROWTH_LIMIT}x window"
                )
        hit = np.nonzero(res.v_port >= target if rising else res.v_port <= target)[0]
        keep = min(len(res.t) - 1, int(hit[0]) + 2)
        raw.append((res.t[: keep + 1], res.i_port[: keep + 1]))
        max_window = max(max_window, res.t[keep])

    nt = int(np.ceil(max_window / dt)) + 1
    time_grid = np.arange(nt) * dt
    currents = np.zeros((len(cap_grid), nt))
    for i, (tr, ir) in enumerate(raw):
        currents[i] = np.interp(time_grid, tr, ir, right=0.0)
    voltages = _integrate_voltages(
        cap_grid, time_grid, currents, v0=0.0 if rising else vdd
    )
    return DriverCharTable(
        driver=model.driver_id,
        vdd=vdd,
        slew=slew,
        direction=direction,
        cap_grid=cap_grid,
        time_grid=time_grid,
        currents=currents,
        voltages=voltages,
        meta={"model": model.spec(), "dt": dt, "window": window},
    )


# -- library sets ------------------------------------------------------------


@dataclass(frozen=True)
class SelectedTable:
    table: DriverCharTable
    out_of_range: bool = False
    blended: bool = False


def select_table(tables, driver, slew, direction="rising"):
    """Nearest-slew table; bracketing slews blend currents at equal (C, t)."""
    cands = [t for t in tables if t.driver == driver and t.direction == direction]
    if not cands:
        raise CoverageError(f"no tables for driver {driver!r} ({direction})")
    cands.sort(key=lambda t: t.slew)
    slews = np.array([t.slew for t in cands])
    exact = np.nonzero(np.isclose(slews, slew, rtol=1e-12, atol=0.0))[0]
    if len(exact):
        return SelectedTable(table=cands[int(exact[0])])
    if slew < slews[0]:
        return SelectedTable(table=cands[0], out_of_range=True)
    if slew > slews[-1]:
        return SelectedTable(table=cands[-1], out_of_range=True)
    hi = int(np.searchsorted(slews, slew))
    lo = hi - 1
    wgt = (slew - slews[lo]) / (slews[hi] - slews[lo])
    return SelectedTable(table=_blend(cands[lo], cands[hi], wgt, slew), blended=True)


def _blend(ta, tb, wgt, slew):
    if len(ta.cap_grid) != len(tb.cap_grid) or not np.allclose(
        ta.cap_grid, tb.cap_grid, rtol=1e-9
    ):
        raise CoverageError("cannot blend tables with different cap grids")
    dt = min(ta.dt, tb.dt)
    window = max(ta.window, tb.window)
    tg = np.arange(int(np.ceil(window / dt)) + 1) * dt
    cur = np.zeros((len(ta.cap_grid), len(tg)))
    for i in range(len(ta.cap_grid)):
        ia = np.interp(tg, ta.time_grid, ta.currents[i], right=0.0)
        ib = np.interp(tg, tb.time_grid, tb.currents[i], right=0.0)
        cur[i] = (1 - wgt) * ia + wgt * ib
    v0 = 0.0 if ta.direction == "rising" else ta.vdd
    volts = _integrate_voltages(ta.cap_grid, tg, cur, v0=v0)
    return DriverCharTable(
        driver=ta.driver,
        vdd=ta.vdd,
        slew=slew,
        direction=ta.direction,
        cap_grid=ta.cap_grid.copy(),
        time_grid=tg,
        currents=cur,
        voltages=volts,
        meta={"blended_from": [ta.slew, tb.slew]},
    )
