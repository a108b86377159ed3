"""Command-line front end.

Subcommands wire the pipeline stages together: `characterize` builds
driver tables, `respond` runs parse -> reduce -> select -> match ->
stitch -> metrics, `verify` adds the golden transient and error
thresholds, `suite` runs the benchmark comparison, and `bench-kernels`
times the compiled kernels against the pure-python fallback.

Exit codes: 0 success, 1 verification threshold exceeded, 2 usage or
configuration error, 3 domain error (coverage/reachability), 4 numerical
failure.  Every flag can be preset through an RCDCM_<NAME> environment
variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConvergenceError,
    CoverageError,
    NonSettlingError,
    PreconditionError,
    RcdcmError,
    SingularNetworkError,
    VoltageNotReachedError,
)

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_NUMERICAL = 4

_DOMAIN_ERRORS = (CoverageError, SingularNetworkError, VoltageNotReachedError)
_NUMERICAL_ERRORS = (ConvergenceError, NonSettlingError)


def _env(name, default):
    return os.environ.get(f"RCDCM_{name.upper().replace('-', '_')}", default)


def build_parser():
    p = argparse.ArgumentParser(prog="rcdcm", description=__doc__)
    p.add_argument("--version", action="version", version=f"rcdcm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("characterize", help="build driver tables from a model spec")
    pc.add_argument("--model", required=True, help="driver model spec JSON file")
    pc.add_argument("--cmax", type=float, default=None,
                    help="grid ceiling in farads (default: from --netlist)")
    pc.add_argument("--netlist", default=None, help="net whose capacitance sum sets C_max")
    pc.add_argument("--slews", type=float, nargs="+", default=None,
                    help="override the slews listed in the model spec")
    pc.add_argument("--window", type=float, default=None)
    pc.add_argument("--dt", type=float, default=None)
    pc.add_argument("--out", default=_env("out", "."), help="output directory")

    pr = sub.add_parser("respond", help="predict the waveform for one net")
    _respond_flags(pr)

    pv = sub.add_parser("verify", help="respond plus golden-transient comparison")
    _respond_flags(pv)
    pv.add_argument("--max-err", type=float, default=float(_env("max_err", "0.05")))
    pv.add_argument("--baseline", action="store_true",
                    help="add the fixed-C_total comparator rows")
    pv.add_argument("--oracle-dt", type=float, default=None)

    ps = sub.add_parser("suite", help="run the synthetic benchmark comparison")
    ps.add_argument("--seed", type=int, default=int(_env("seed", "7")))
    ps.add_argument("--sizes", type=int, nargs="+", default=[10, 200, 2000])
    ps.add_argument("--n-steps", type=int, default=int(_env("n_steps", "100")))
    ps.add_argument("--q", type=int, default=int(_env("q", "4")))
    ps.add_argument("--jobs", type=int, default=int(_env("jobs", "1")))
    ps.add_argument("--out", default=_env("out", "."))

    pb = sub.add_parser("bench-kernels", help="compiled vs pure-python kernel timing")
    pb.add_argument("--repeat", type=int, default=5)

    return p


def _respond_flags(p):
    p.add_argument("--netlist", required=True, help="RC netlist file")
    p.add_argument("--port", required=True, default=_env("port", None),
                   help="driver output node name")
    p.add_argument("--tables", required=True, help="directory of DriverCharTable JSON files")
    p.add_argument("--driver", required=True, help="driver id to select from the tables")
    p.add_argument("--slew", type=float, required=True)
    p.add_argument("--direction", choices=["rising", "falling"], default="rising")
    p.add_argument("--q", type=int, default=int(_env("q", "4")))
    p.add_argument("--n-steps", type=int, default=int(_env("n_steps", "100")))
    p.add_argument("--tol", type=float, default=float(_env("tol", "0.01")))
    p.add_argument("--crossing", choices=["incremental", "absolute"],
                   default=_env("crossing", "incremental"))
    p.add_argument("--jobs", type=int, default=int(_env("jobs", "1")))
    p.add_argument("--out", default=_env("out", "."))
    p.add_argument("--dump-poles", action="store_true", help="export the pole/residue JSON")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return _dispatch(args)
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RcdcmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _dispatch(args):
    if args.command == "characterize":
        return cmd_characterize(args)
    if args.command == "respond":
        return cmd_respond(args)
    if args.command == "verify":
        return cmd_verify(args)
    if args.command == "suite":
        return cmd_suite(args)
    if args.command == "bench-kernels":
        return cmd_bench_kernels(args)
    return EXIT_USAGE


def _load_tables(table_dir):
    from .driverlib import DriverCharTable

    tables = []
    for path in sorted(Path(table_dir).glob("*.json")):
        tables.append(DriverCharTable.from_json(path.read_text()))
    if not tables:
        raise CoverageError(f"no table JSON files under {table_dir}")
    return tables


def cmd_characterize(args):
    from .driverlib import characterize, default_cap_grid, model_from_spec
    from .netlist import parse_netlist

    spec = json.loads(Path(args.model).read_text())
    slews = args.slews or spec.get("slews")
    if not slews:
        raise PreconditionError("no slews given (model spec 'slews' or --slews)")
    if args.cmax is not None:
        c_max = args.cmax
    elif args.netlist:
        text = Path(args.netlist).read_text()
        c_max = parse_netlist(text, _first_node(text)).c_total
    else:
        raise PreconditionError("need --cmax or --netlist to size the grid")
    model = model_from_spec(spec)
    grid = default_cap_grid(c_max)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for slew in slews:
        window = args.window or max(
            8.0 * model.effective_resistance() * c_max, 4.0 * slew, 5e-11
        )
        dt = args.dt or min(slew / 60.0, window / 2000.0)
        t0 = time.perf_counter()
        table = characterize(model, model.vdd, slew, grid, window, dt)
        elapsed = time.perf_counter() - t0
        name = f"{model.driver_id}__{model.direction}__{slew:.3e}.json"
        (out / name).write_text(table.to_json())
        print(
            f"{name}: grid {len(grid)} caps [{grid[0]:.3e}, {grid[-1]:.3e}] F, "
            f"window {table.window:.3e} s, dt {dt:.3e} s, {elapsed:.2f} s"
        )
    return EXIT_OK


def _first_node(text):
    from .netlist import parse_netlist

    for line in text.splitlines():
        bare = line.split("*")[0].split(";")[0].strip()
        if bare:
            return bare.split()[1]
    raise PreconditionError("empty netlist")


def _respond_pipeline(args):
    from .dcm import DcmConfig, dcm_match, stitch_head, stitch_tail
    from .driverlib import select_table
    from .mor import reduce
    from .netlist import assemble_mna, parse_netlist

    net = parse_netlist(Path(args.netlist).read_text(), args.port)
    sys_ = assemble_mna(net)
    tables = _load_tables(args.tables)
    sel = select_table(tables, args.driver, args.slew, args.direction)
    if sel.out_of_range:
        print("warning: slew outside the characterized range; nearest table used",
              file=sys.stderr)
    if net.c_total > sel.table.c_max * (1 + 1e-9):
        raise CoverageError(
            f"net C_total {net.c_total:.3e} F exceeds table C_max {sel.table.c_max:.3e} F"
        )
    t0 = time.perf_counter()
    ya = reduce(sys_, args.q, net_id=Path(args.netlist).stem)
    cfg = DcmConfig(n_steps=args.n_steps, tolerance=args.tol, crossing=args.crossing)
    trace = dcm_match(sel.table, ya, cfg)
    stitch_head(trace, sel.table)
    stitch_tail(trace, sel.table)
    runtime = time.perf_counter() - t0
    return net, sys_, sel.table, ya, trace, runtime


def cmd_respond(args):
    from .dcm import compute_metrics, write_trace_csv
    from .response import write_waveform_csv

    net, sys_, table, ya, trace, runtime = _respond_pipeline(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.netlist).stem

    t, v, i = trace.waveforms()
    write_waveform_csv(out / f"{stem}_waveform.csv", t, v, i)
    write_trace_csv(out / f"{stem}_trace.csv", trace)
    metrics = compute_metrics(t, i)
    payload = dict(metrics.as_dict())
    payload["runtime_s"] = runtime
    payload["residual_max"] = float(trace.step_residual.max())
    (out / f"{stem}_metrics.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    if args.dump_poles:
        (out / f"{stem}_poles.json").write_text(ya.to_json())
    print(f"{stem}: {len(trace.step_t)} steps, runtime {runtime:.3f} s, "
          f"peak {metrics.peak:.3e} A")
    return EXIT_OK


def cmd_verify(args):
    from .dcm import baseline_ctotal, compute_metrics
    from .driverlib import model_from_spec
    from .oracle import simulate_driver

    net, sys_, table, ya, trace, runtime = _respond_pipeline(args)
    model = model_from_spec(table.meta.get("model", {}))
    slew = table.slew
    reff = model.effective_resistance()
    tau = (reff + sys_.r_total) * sys_.c_total
    dt = args.oracle_dt or min(slew / 50.0, tau / 300.0, 5e-14)
    window = 8.0 * tau + 3.0 * slew
    t0 = time.perf_counter()
    gold = simulate_driver(sys_, model, model.input_for(slew), dt, window, enforce_dt=False)
    t_oracle = time.perf_counter() - t0

    rail = table.vdd if table.direction == "rising" else 0.0
    hit = np.nonzero(np.abs(gold.v_port - rail) <= 0.01 * table.vdd)[0]
    win = (0.0, float(gold.t[hit[0]]) if len(hit) else window)

    t_d, i_d = trace.current_samples()
    if t_d[-1] < win[1]:
        t_d = np.append(t_d, [np.nextafter(t_d[-1], np.inf), win[1]])
        i_d = np.append(i_d, [0.0, 0.0])
    m_d = compute_metrics(t_d, i_d, win)
    m_o = compute_metrics(gold.t, gold.i_port, win)

    def rel(a, b):
        return abs(a - b) / max(abs(b), 1e-30)

    errs = {
        "avg": rel(m_d.avg, m_o.avg),
        "rms": rel(m_d.rms, m_o.rms),
        "peak": rel(m_d.peak, m_o.peak),
    }
    speedup = t_oracle / max(runtime, 1e-9)
    print(f"errors vs oracle: avg {errs['avg']:.2%}  rms {errs['rms']:.2%}  "
          f"peak {errs['peak']:.2%}  (speedup {speedup:.0f}x)")
    if args.baseline:
        tb, _vb, ib = baseline_ctotal(table, sys_.c_total)
        if tb[-1] < win[1]:
            tb = np.append(tb, [np.nextafter(tb[-1], np.inf), win[1]])
            ib = np.append(ib, [0.0, 0.0])
        m_b = compute_metrics(tb, ib, win)
        print(
            f"baseline C_total:  avg {rel(m_b.avg, m_o.avg):.2%}  "
            f"rms {rel(m_b.rms, m_o.rms):.2%}  peak {rel(m_b.peak, m_o.peak):.2%}"
        )
    if max(errs.values()) > args.max_err:
        print(f"FAIL: worst error {max(errs.values()):.2%} exceeds --max-err "
              f"{args.max_err:.2%}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_suite(args):
    from .dcm import DcmConfig
    from .metrics_suite import generate_suite, run_comparison

    suite = generate_suite(args.seed, sizes=tuple(args.sizes))
    cfg = DcmConfig(n_steps=args.n_steps)
    report = run_comparison(suite, cfg=cfg, q=args.q, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "suite_report.json").write_text(report.to_json())
    print(report.table())
    print(f"mean rms error: {report.mean_err(metric='rms'):.2%}")
    return EXIT_OK


def cmd_bench_kernels(args):
    from .benchmarks import bench_kernels

    rows = bench_kernels(repeat=args.repeat)
    width = max(len(r["name"]) for r in rows)
    print(f"{'kernel':{width}s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}")
    for r in rows:
        comp = f"{r['cython_s']*1e3:8.2f}ms" if r["cython_s"] else "      --"
        speed = f"{r['speedup']:7.1f}x" if r["speedup"] else "      --"
        print(f"{r['name']:{width}s} {r['python_s']*1e3:8.2f}ms {comp} {speed}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
