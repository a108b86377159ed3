"""Golden-reference transient simulation: full MNA time integration.

Fixed-step trapezoidal integration with the port either constrained to a
PWL voltage source (constraint-row formulation, port current recovered
from the source row) or driven by a behavioral driver model (scalar
Newton solve on the port voltage per step).  Steps whose interval
contains a source breakpoint use backward Euler: trapezoidal rule is
A-stable but only marginally damps the sub-grid modes of the repair
resistors, and a slope discontinuity would otherwise excite a slowly
decaying alternating artifact in the port current.  Finitely many BE
steps leave the global order at 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, PreconditionError
from .netlist import EPSILON_OHMS
from .response import PwlWaveform

_DENSE_LIMIT = 160  # below this many unknowns dense LU beats splu
_NEWTON_ATOL = 1e-12  # amps
_NEWTON_MAXIT = 60


@dataclass(frozen=True)
class TransientResult:
    """Uniform-grid transient waveforms at the port."""

    t: np.ndarray
    v_port: np.ndarray
    i_port: np.ndarray
    node_v: np.ndarray | None = None  # n x T, optional
    stats: dict = field(default_factory=dict)

    def settle_value(self):
        return float(self.v_port[-1])


class _Factored:
    """Constant-matrix solver: precomputed dense inverse below the size
    cutoff (one numpy matvec per step), sparse LU above it."""

    def __init__(self, A):
        n = A.shape[0]
        if n <= _DENSE_LIMIT:
            self._inv = np.linalg.inv(A.toarray() if sp.issparse(A) else A)
            self.solve = self._inv.__matmul__
        else:
            self._lu = spla.splu(A.tocsc())
            self.solve = self._lu.solve


def _as_operator(A, n):
    """Dense array below the cutoff so per-step matvecs stay in numpy."""
    if n <= _DENSE_LIMIT and sp.issparse(A):
        return A.toarray()
    return A


def stiffness_dt(sys_, driver_r=None):
    """Suggested dt: one tenth of the fastest physical time constant.

    Repair epsilon resistors are excluded: their ~1e-18 s constants are an
    artifact, six-plus orders below any signal bandwidth, and trapezoidal
    integration is A-stable on them.
    """
    rs = [r.value for r in sys_.net.resistors if r.value > 10 * EPSILON_OHMS]
    cs = [c.value for c in sys_.net.capacitors]
    taus = []
    if rs and cs:
        taus.append(min(rs) * min(cs))
    if driver_r is not None and cs:
        taus.append(driver_r * min(cs))
    if not taus:
        return None
    return min(taus) / 10.0


def _check_dt(sys_, dt, driver_r=None):
    limit = stiffness_dt(sys_, driver_r)
    if limit is not None and dt > limit * (1 + 1e-9):
        raise PreconditionError(
            f"dt={dt:.3e} exceeds stiffness bound {limit:.3e} (min RC / 10)"
        )


def _breakpoint_steps(source_times, t0, dt, nsteps):
    """Indices k whose interval (t_k, t_{k+1}] contains a source breakpoint."""
    marks = set()
    for tb in np.atleast_1d(source_times):
        k = int(np.floor((tb - t0) / dt - 1e-9))
        for kk in (k, k + 1):
            if 0 <= kk < nsteps:
                marks.add(kk)
    marks.add(0)
    return marks


def simulate_pwl(sys_, source, dt, window, x0=None, store_nodes=False, enforce_dt=True):
    """Transient with the port node constrained to the PWL source voltage.

    Trapezoidal integration of C dv/dt + G v = e i_src with the extra row
    v_port = u(t); the port current comes straight from the constraint-row
    unknown, not from differentiating charge.

    enforce_dt=False skips the min-RC/10 stiffness guard: on finely
    extracted lines that bound tracks the per-segment pole, whose port
    residue is negligible, and callers instead justify their dt with a
    halving self-convergence check.
    """
    if dt <= 0 or window <= 0:
        raise PreconditionError("dt and window must be positive")
    if enforce_dt:
        _check_dt(sys_, dt)
    n = sys_.n
    p = sys_.port_index
    G = sys_.G.tocsc()
    C = sys_.C.tocsc()
    e = sp.csc_matrix(([1.0], ([p], [0])), shape=(n, 1))

    nsteps = int(np.ceil(window / dt))
    t = np.arange(nsteps + 1) * dt

    M_tr = sp.bmat([[C / dt + G / 2.0, -e / 2.0], [e.T, None]], format="csc")
    M_be = sp.bmat([[C / dt + G, -e], [e.T, None]], format="csc")
    lu_tr = _Factored(M_tr)
    lu_be = _Factored(M_be)
    Cdt = _as_operator(C / dt, n)
    Gop = _as_operator(G, n)

    u = source.value(t)
    # consistent DC start: port held at u(0)
    if x0 is None:
        Mdc = sp.bmat([[G, -e], [e.T, None]], format="csc")
        xdc = _Factored(Mdc).solve(np.concatenate([np.zeros(n), [u[0]]]))
        v = xdc[:n]
        i = float(xdc[n])
    else:
        v = np.asarray(x0, dtype=float).copy()
        i = float(sys_.B @ (G @ v))

    be_steps = _breakpoint_steps(source.times, 0.0, dt, nsteps)

    v_port = np.empty(nsteps + 1)
    i_port = np.empty(nsteps + 1)
    nodes = np.empty((n, nsteps + 1)) if store_nodes else None
    v_port[0] = v[p]
    i_port[0] = i
    if store_nodes:
        nodes[:, 0] = v
    rhs = np.empty(n + 1)
    for k in range(nsteps):
        if k in be_steps:
            rhs[:n] = Cdt @ v
            rhs[n] = u[k + 1]
            x = lu_be.solve(rhs)
        else:
            rhs[:n] = Cdt @ v - 0.5 * (Gop @ v) + 0.5 * i * sys_.B
            rhs[n] = u[k + 1]
            x = lu_tr.solve(rhs)
        v = x[:n]
        i = float(x[n])
        if not np.isfinite(i) or not np.all(np.isfinite(v)):
            raise ConvergenceError(f"non-finite state at step {k}", time=t[k + 1])
        v_port[k + 1] = v[p]
        i_port[k + 1] = i
        if store_nodes:
            nodes[:, k + 1] = v
    stats = {"dt": dt, "steps": nsteps, "be_steps": len(be_steps)}
    return TransientResult(t=t, v_port=v_port, i_port=i_port, node_v=nodes, stats=stats)


def simulate_driver(sys_, model, input_wave, dt, window, store_nodes=False, enforce_dt=True):
    """Transient with a behavioral driver at the port.

    The driver contributes a nonlinear output current I(v_in, v_port), an
    input-output coupling capacitance and an internal output capacitance.
    Each step reduces to a scalar Newton solve on the port voltage via the
    precomputed M^-1 e column; residual target 1e-12 A.
    """
    if dt <= 0 or window <= 0:
        raise PreconditionError("dt and window must be positive")
    if enforce_dt:
        _check_dt(sys_, dt)
    n = sys_.n
    p = sys_.port_index
    G = sys_.G.tocsc()
    cc = model.c_couple
    ci = model.c_int
    Caug = (sys_.C + sp.csc_matrix(([cc + ci], ([p], [p])), shape=(n, n))).tocsc()

    nsteps = int(np.ceil(window / dt))
    t = np.arange(nsteps + 1) * dt
    vin = input_wave.value(t)
    # exact mean of dv_in/dt over each step (breakpoints inside included)
    vin_slope = np.diff(vin) / dt

    M_tr = (Caug / dt + G / 2.0).tocsc()
    M_be = (Caug / dt + G).tocsc()
    lu_tr = _Factored(M_tr)
    lu_be = _Factored(M_be)
    Cdt = _as_operator(Caug / dt, n)
    Gop = _as_operator(G, n)
    ecol = np.zeros(n)
    ecol[p] = 1.0
    w_tr = lu_tr.solve(ecol)
    w_be = lu_be.solve(ecol)

    v = np.full(n, model.rest_voltage(), dtype=float)
    I_prev = model.output_current(float(vin[0]), v[p])[0]

    be_steps = _breakpoint_steps(input_wave.times, 0.0, dt, nsteps)

    v_port = np.empty(nsteps + 1)
    i_port = np.empty(nsteps + 1)
    nodes = np.empty((n, nsteps + 1)) if store_nodes else None
    v_port[0] = v[p]
    i_port[0] = float(sys_.B @ (Gop @ v))
    if store_nodes:
        nodes[:, 0] = v

    for k in range(nsteps):
        be = k in be_steps
        if be:
            rhs = Cdt @ v + ecol * (cc * vin_slope[k])
            wcol, scale = w_be, 1.0
            lu = lu_be
        else:
            rhs = Cdt @ v - 0.5 * (Gop @ v) + ecol * (0.5 * I_prev + cc * vin_slope[k])
            wcol, scale = w_tr, 0.5
            lu = lu_tr
        y = lu.solve(rhs)
        vp = _solve_port(model, float(vin[k + 1]), y[p], scale * wcol[p], t[k + 1])
        I_new = model.output_current(float(vin[k + 1]), vp)[0]
        v = y + (scale * I_new) * wcol
        I_prev = I_new
        if not np.all(np.isfinite(v)):
            raise ConvergenceError(f"non-finite state at step {k}", time=t[k + 1])
        v_port[k + 1] = v[p]
        # port row of G is the exact resistive inflow (no capacitors at the port)
        i_port[k + 1] = float(sys_.B @ (Gop @ v))
        if store_nodes:
            nodes[:, k + 1] = v
    stats = {"dt": dt, "steps": nsteps, "be_steps": len(be_steps)}
    return TransientResult(t=t, v_port=v_port, i_port=i_port, node_v=nodes, stats=stats)


def _solve_port(model, vin, y_p, wp, tnow):
    """Scalar solve of vp = y_p + wp * I(vin, vp), damped Newton + bisection."""
    vp = y_p
    for _ in range(_NEWTON_MAXIT):
        I, dI = model.output_current(vin, vp)
        F = vp - y_p - wp * I
        dF = 1.0 - wp * dI
        if abs(dF) < 1e-30:
            break
        step = F / dF
        vp_new = vp - step
        # residual measured in amps
        if wp != 0.0 and abs(F / wp) <= _NEWTON_ATOL * max(1.0, abs(I)):
            return vp
        if wp == 0.0:
            return y_p
        vp = vp_new
    # bisection fallback over a generous bracket
    lo, hi = -2.0 * model.vdd, 3.0 * model.vdd

    def F(v):
        return v - y_p - wp * model.output_current(vin, v)[0]

    flo, fhi = F(lo), F(hi)
    if flo * fhi > 0:
        raise ConvergenceError("port Newton failed to bracket", time=tnow)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        if abs(fm / wp) <= _NEWTON_ATOL * max(1.0, abs(model.output_current(vin, mid)[0])):
            return mid
        if flo * fm <= 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    raise ConvergenceError("port solve did not converge", time=tnow)


def charge_delivered(result):
    """Trapezoidal integral of the port current over the stored window."""
    return float(np.trapezoid(result.i_port, result.t))


def stored_energy(sys_, node_v):
    """1/2 x^T C x per stored time step; needs store_nodes=True results."""
    C = sys_.C
    return 0.5 * np.einsum("it,it->t", node_v, C @ node_v)


def runtime_benchmark(cases, repeat=1):
    """Time dcm_match against simulate_driver on prepared benchmark cases.

    Each case supplies the already-characterized table, reduced admittance
    and oracle settings, so the comparison excludes characterization.
    Returns per-case speedup ratios.
    """
    import time

    from .dcm import dcm_match

    rows = []
    for case in cases:
        t0 = time.perf_counter()
        for _ in range(repeat):
            dcm_match(case["table"], case["ya"], case["cfg"])
        t_dcm = (time.perf_counter() - t0) / repeat

        t0 = time.perf_counter()
        simulate_driver(case["sys"], case["model"], case["input"], case["dt"], case["window"])
        t_oracle = time.perf_counter() - t0
        rows.append(
            {
                "name": case.get("name", "?"),
                "dcm_s": t_dcm,
                "oracle_s": t_oracle,
                "speedup": t_oracle / t_dcm if t_dcm > 0 else float("inf"),
            }
        )
    return rows
