"""Synthetic benchmark suite and error reporting.

Topology classes reproduce the qualitative regimes of real signal lines:
uniform ladders (shielding-dominant as they grow), balanced RC trees
(fanout-dominant), bus-like trunks with receiver capacitors at branch
ends (inactive drivers modeled as fixed leaf caps), and word-line-like
chains with a small stub load per section.  Drivers are sized to their
lines: the matching premise degrades when line resistance dwarfs the
driver, so suite pairings keep them comparable.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import dcm as dcm_mod
from . import driverlib, mor, oracle
from .netlist import RcNetwork, assemble_mna, parse_netlist


@dataclass(frozen=True)
class Benchmark:
    name: str
    kind: str
    net: RcNetwork = field(repr=False)
    port: str
    driver: object
    slew: float
    vdd: float
    n_elements: int
    c_total: float


def _jitter(rng, mean, spread=0.15):
    return mean * rng.uniform(1.0 - spread, 1.0 + spread)


def ladder_net(rng, nseg, r_mean, c_mean):
    lines = []
    prev = "p"
    for i in range(1, nseg + 1):
        lines.append(f"R{i} {prev} n{i} {_jitter(rng, r_mean)!r}")
        lines.append(f"C{i} n{i} 0 {_jitter(rng, c_mean)!r}")
        prev = f"n{i}"
    return parse_netlist("\n".join(lines), "p")


def tree_net(rng, fanout, depth, r_mean, c_mean):
    lines = []
    counter = [0]

    def grow(parent, level):
        if level > depth:
            return
        for _ in range(fanout):
            counter[0] += 1
            node = f"n{counter[0]}"
            lines.append(f"R{counter[0]} {parent} {node} {_jitter(rng, r_mean)!r}")
            lines.append(f"C{counter[0]} {node} 0 {_jitter(rng, c_mean)!r}")
            grow(node, level + 1)

    # one trunk segment from the port, then the tree fans out beneath it
    counter[0] += 1
    lines.append(f"R1 p n1 {_jitter(rng, r_mean)!r}")
    lines.append(f"C1 n1 0 {_jitter(rng, c_mean)!r}")
    grow("n1", 2)
    return parse_netlist("\n".join(lines), "p")


def bus_net(rng, trunk, branches, branch_len, r_mean, c_mean, leaf_cap):
    lines = []
    idx = [0]

    def seg(a, b):
        idx[0] += 1
        lines.append(f"R{idx[0]} {a} {b} {_jitter(rng, r_mean)!r}")
        lines.append(f"C{idx[0]} {b} 0 {_jitter(rng, c_mean)!r}")

    prev = "p"
    taps = []
    for i in range(1, trunk + 1):
        node = f"t{i}"
        seg(prev, node)
        prev = node
        taps.append(node)
    pick = np.linspace(0, len(taps) - 1, branches).astype(int)
    for b, j in enumerate(pick):
        prev = taps[j]
        for k in range(1, branch_len + 1):
            node = f"b{b}_{k}"
            seg(prev, node)
            prev = node
        idx[0] += 1
        # inactive next-stage driver lumped as a fixed receiver capacitor
        lines.append(f"C{idx[0]} {prev} 0 {_jitter(rng, leaf_cap)!r}")
    return parse_netlist("\n".join(lines), "p")


def wordline_net(rng, sections, r_mean, c_mean, stub_r, stub_c):
    lines = []
    idx = [0]
    prev = "p"
    for i in range(1, sections + 1):
        node = f"w{i}"
        idx[0] += 1
        lines.append(f"R{idx[0]} {prev} {node} {_jitter(rng, r_mean)!r}")
        idx[0] += 1
        lines.append(f"C{idx[0]} {node} 0 {_jitter(rng, c_mean)!r}")
        stub = f"s{i}"
        idx[0] += 1
        lines.append(f"R{idx[0]} {node} {stub} {_jitter(rng, stub_r)!r}")
        idx[0] += 1
        lines.append(f"C{idx[0]} {stub} 0 {_jitter(rng, stub_c)!r}")
        prev = node
    return parse_netlist("\n".join(lines), "p")


VDD_DEFAULT = 1.1
SLEWS_DEFAULT = (1e-11, 5e-11, 1.5e-10)


def default_drivers(vdd=VDD_DEFAULT):
    return [
        driverlib.MosLikeDriver(
            i_sat=0.6e-3, v_knee=0.25, vdd=vdd, c_couple=1.2e-15, c_int=3e-15,
            threshold=0.25, driver_id="mos_inv",
        ),
        driverlib.TheveninRampDriver(r_drv=1.5e3, vdd=vdd, driver_id="thev_buf"),
    ]


def generate_suite(seed, sizes=(10, 200, 2000), slews=SLEWS_DEFAULT, vdd=VDD_DEFAULT):
    """Deterministic benchmark set; same seed, same suite."""
    drivers = default_drivers(vdd)
    nets = []
    rng = np.random.default_rng(seed)
    for n in sizes:
        # total line resistance capped near the driver scale regardless of n
        r_mean = min(600.0 / n, 12.0)
        c_mean = 80e-15 / n
        nets.append((f"ladder_{n}", "ladder", ladder_net(rng, n, r_mean, c_mean)))
    nets.append(("tree_f2d6", "tree", tree_net(rng, 2, 6, 6.0, 0.6e-15)))
    nets.append(
        ("bus_4x8", "bus", bus_net(rng, 24, 4, 8, 8.0, 0.5e-15, 6e-15))
    )
    nets.append(
        ("wordline_60", "wordline", wordline_net(rng, 60, 6.0, 0.4e-15, 30.0, 0.5e-15))
    )
    out = []
    for name, kind, net in nets:
        for drv in drivers:
            for slew in slews:
                out.append(
                    Benchmark(
                        name=f"{name}__{drv.driver_id}__{slew*1e12:.0f}ps",
                        kind=kind,
                        net=net,
                        port=net.port,
                        driver=drv,
                        slew=slew,
                        vdd=vdd,
                        n_elements=len(net.elements),
                        c_total=net.c_total,
                    )
                )
    return out


# -- pipeline ------------------------------------------------------------


class TableCache:
    """Characterization cache keyed on (driver spec, slew, c_max)."""

    def __init__(self):
        self._store = {}
        self.char_time = 0.0

    def get(self, driver, slew, c_max):
        # max-load estimate: 10% headroom over the capacitance sum (the tail
        # of a resistive line draws like slightly more than C_total), rounded
        # up so nets of similar size share one table
        bucket = float(np.ceil(1.1 * c_max / 2e-15) * 2e-15)
        key = (json.dumps(driver.spec(), sort_keys=True), slew, round(bucket * 1e21))
        tab = self._store.get(key)
        if tab is None:
            grid = driverlib.default_cap_grid(bucket)
            window = max(8.0 * driver.effective_resistance() * bucket, 4.0 * slew, 5e-11)
            dt = min(slew / 60.0, window / 2000.0)
            t0 = time.perf_counter()
            tab = driverlib.characterize(driver, driver.vdd, slew, grid, window, dt)
            self.char_time += time.perf_counter() - t0
            self._store[key] = tab
        return tab


def oracle_settings(sys_, bench):
    """dt and window for the golden transient on this benchmark."""
    reff = bench.driver.effective_resistance()
    tau = (reff + sys_.r_total) * sys_.c_total
    dt = min(bench.slew / 50.0, tau / 300.0, 5e-14)
    window = 8.0 * tau + 3.0 * bench.slew
    return dt, window


def run_case(bench, cfg=None, cache=None, q=4):
    """Full pipeline on one benchmark; returns the per-case report row."""
    cfg = cfg or dcm_mod.DcmConfig()
    cache = cache or TableCache()
    sys_ = assemble_mna(bench.net)
    table = cache.get(bench.driver, bench.slew, sys_.c_total)

    t0 = time.perf_counter()
    ya = mor.reduce(sys_, q, net_id=bench.name)
    t_reduce = time.perf_counter() - t0

    t0 = time.perf_counter()
    trace = dcm_mod.dcm_match(table, ya, cfg)
    dcm_mod.stitch_head(trace, table)
    dcm_mod.stitch_tail(trace, table)
    t_dcm = time.perf_counter() - t0

    dt, window = oracle_settings(sys_, bench)
    t0 = time.perf_counter()
    gold = oracle.simulate_driver(
        sys_, bench.driver, bench.driver.input_for(bench.slew), dt, window,
        enforce_dt=False,
    )
    t_oracle = time.perf_counter() - t0

    # half-cycle-style window: through the oracle's 99% settle point
    rail = bench.vdd if table.direction == "rising" else 0.0
    hit = np.nonzero(np.abs(gold.v_port - rail) <= 0.01 * bench.vdd)[0]
    t99 = gold.t[hit[0]] if len(hit) else window
    win = (0.0, min(window, float(t99)))
    t_d, i_d = trace.current_samples()
    if t_d[-1] < window:
        t_d = np.append(t_d, [np.nextafter(t_d[-1], np.inf), window])
        i_d = np.append(i_d, [0.0, 0.0])
    m_dcm = dcm_mod.compute_metrics(t_d, i_d, win)
    m_gold = dcm_mod.compute_metrics(gold.t, gold.i_port, win)
    tau_dom = 1.0 / min(abs(p.real) for p in ya.poles)
    tb, _vb, ib = dcm_mod.baseline_ctotal(table, sys_.c_total)
    if tb[-1] < window:
        tb = np.append(tb, [np.nextafter(tb[-1], np.inf), window])
        ib = np.append(ib, [0.0, 0.0])
    m_base = dcm_mod.compute_metrics(tb, ib, win)

    def rel(a, b):
        return abs(a - b) / max(abs(b), 1e-30)

    row = {
        "name": bench.name,
        "kind": bench.kind,
        "driver": bench.driver.driver_id,
        "slew_s": bench.slew,
        "n_elements": bench.n_elements,
        "c_total_F": sys_.c_total,
        "c_eff_first_F": trace.c_eff_first,
        "c_eff_last_F": trace.c_eff_last,
        "shielding_dominant": bool(tau_dom > 0.6 * bench.slew),
        "dcm_err": {
            "avg": rel(m_dcm.avg, m_gold.avg),
            "rms": rel(m_dcm.rms, m_gold.rms),
            "peak": rel(m_dcm.peak, m_gold.peak),
        },
        "baseline_err": {
            "avg": rel(m_base.avg, m_gold.avg),
            "rms": rel(m_base.rms, m_gold.rms),
            "peak": rel(m_base.peak, m_gold.peak),
        },
        "metrics_dcm": m_dcm.as_dict(),
        "metrics_oracle": m_gold.as_dict(),
        "metrics_baseline": m_base.as_dict(),
        "residual_max": float(trace.step_residual.max()),
        "runtime_s": {
            "reduce": t_reduce,
            "dcm": t_dcm,
            "oracle": t_oracle,
        },
        "undershoot": {
            "dcm_V": float(trace.voltage_pwl().values.min()),
            "oracle_V": float(gold.v_port.min()),
        },
    }
    return row


@dataclass
class ErrorReport:
    rows: list
    config: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({"config": self.config, "rows": self.rows}, indent=2, sort_keys=True)

    def table(self):
        hdr = (
            f"{'benchmark':34s} {'elems':>5s} {'shield':>6s} "
            f"{'avg%':>7s} {'rms%':>7s} {'peak%':>7s} {'b.avg%':>7s} {'b.rms%':>7s} {'b.peak%':>8s}"
        )
        lines = [hdr, "-" * len(hdr)]
        for r in self.rows:
            lines.append(
                f"{r['name']:34s} {r['n_elements']:5d} {str(r['shielding_dominant']):>6s} "
                f"{100*r['dcm_err']['avg']:7.2f} {100*r['dcm_err']['rms']:7.2f} "
                f"{100*r['dcm_err']['peak']:7.2f} {100*r['baseline_err']['avg']:7.2f} "
                f"{100*r['baseline_err']['rms']:7.2f} {100*r['baseline_err']['peak']:8.2f}"
            )
        return "\n".join(lines)

    def mean_err(self, which="dcm_err", metric="rms"):
        return float(np.mean([r[which][metric] for r in self.rows]))


def run_comparison(suite, cfg=None, q=4, jobs=1):
    """Characterize (cached), reduce, match, compare against the oracle."""
    cache = TableCache()
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_case_worker, [(b, cfg, q) for b in suite]))
    else:
        rows = [run_case(b, cfg=cfg, cache=cache, q=q) for b in suite]
    return ErrorReport(
        rows=rows,
        config={
            "q": q,
            "n_steps": (cfg or dcm_mod.DcmConfig()).n_steps,
            "benchmarks": len(suite),
            "char_time_s": cache.char_time,
        },
    )


def _case_worker(args):
    bench, cfg, q = args
    return run_case(bench, cfg=cfg, cache=TableCache(), q=q)


def n_sweep(suite, n_values=(25, 50, 100), q=4):
    """Error and runtime versus the step count N, sharing tables and models."""
    cache = TableCache()
    out = {}
    for n in n_values:
        cfg = dcm_mod.DcmConfig(n_steps=n)
        t0 = time.perf_counter()
        report = run_comparison_with_cache(suite, cfg, q, cache)
        out[n] = {
            "mean_rms_err": report.mean_err(metric="rms"),
            "mean_avg_err": report.mean_err(metric="avg"),
            "dcm_runtime_s": float(
                np.sum([r["runtime_s"]["dcm"] for r in report.rows])
            ),
            "wall_s": time.perf_counter() - t0,
        }
    return out


def run_comparison_with_cache(suite, cfg, q, cache):
    rows = [run_case(b, cfg=cfg, cache=cache, q=q) for b in suite]
    return ErrorReport(rows=rows, config={"q": q, "n_steps": cfg.n_steps})
