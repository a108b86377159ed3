#!/usr/bin/env python3
"""Compare the compiled kernel extension against the numpy fallback.

Equivalent to `rcdcm bench-kernels`; kept as a standalone script so the
comparison is runnable straight from a source checkout.
"""

import sys

from rcdcm.benchmarks import bench_kernels, check_parity


def main():
    rows = bench_kernels(repeat=int(sys.argv[1]) if len(sys.argv) > 1 else 5)
    width = max(len(r["name"]) for r in rows)
    print(f"{'kernel':{width}s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}")
    for r in rows:
        comp = f"{r['cython_s']*1e3:8.2f}ms" if r["cython_s"] else "      --"
        speed = f"{r['speedup']:7.1f}x" if r["speedup"] else "      --"
        print(f"{r['name']:{width}s} {r['python_s']*1e3:8.2f}ms {comp} {speed}")
    parity = check_parity()
    if parity is not None:
        print(f"\nbackend parity (max rel deviation): {parity:.3e}")
    else:
        print("\ncompiled extension not available; showing fallback only")


if __name__ == "__main__":
    main()
