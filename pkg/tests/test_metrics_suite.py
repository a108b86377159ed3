import json

import numpy as np
import pytest

from rcdcm.metrics_suite import (
    Benchmark,
    ErrorReport,
    TableCache,
    bus_net,
    generate_suite,
    ladder_net,
    run_case,
    run_comparison,
    tree_net,
    wordline_net,
)
from rcdcm.netlist import serialize_netlist


def test_suite_deterministic():
    a = generate_suite(123, sizes=(10, 50), slews=(1e-11,))
    b = generate_suite(123, sizes=(10, 50), slews=(1e-11,))
    assert [x.name for x in a] == [y.name for y in b]
    for x, y in zip(a, b):
        assert serialize_netlist(x.net) == serialize_netlist(y.net)
    c = generate_suite(124, sizes=(10, 50), slews=(1e-11,))
    assert serialize_netlist(a[0].net) != serialize_netlist(c[0].net)


def test_ladder_element_count():
    rng = np.random.default_rng(0)
    net = ladder_net(rng, 2000, 0.3, 4e-17)
    assert len(net.resistors) == 2000
    assert len(net.capacitors) == 2000


def test_tree_element_count():
    rng = np.random.default_rng(0)
    net = tree_net(rng, 2, 8, 5.0, 1e-15)
    # full binary tree of depth 8: 2^8 - 1 segments
    assert len(net.resistors) == 255
    assert len(net.capacitors) == 255


def test_bus_and_wordline_shapes():
    rng = np.random.default_rng(1)
    bus = bus_net(rng, 24, 4, 8, 8.0, 0.5e-15, 6e-15)
    assert len(bus.resistors) == 24 + 4 * 8
    assert len(bus.capacitors) == 24 + 4 * 8 + 4  # receiver caps at branch ends
    wl = wordline_net(rng, 60, 6.0, 0.4e-15, 30.0, 0.5e-15)
    assert len(wl.resistors) == 120
    assert len(wl.capacitors) == 120


def test_suite_nets_pass_invariants():
    for b in generate_suite(5, sizes=(10,), slews=(1e-11,)):
        assert b.net.validate()
        assert b.c_total > 0
        assert b.n_elements == len(b.net.elements)


@pytest.fixture(scope="module")
def small_report():
    suite = generate_suite(7, sizes=(10, 60), slews=(1e-11,))
    return suite, run_comparison(suite)


def test_report_rows_complete(small_report):
    suite, rep = small_report
    assert len(rep.rows) == len(suite)
    names = [r["name"] for r in rep.rows]
    assert names == [b.name for b in suite]  # every benchmark exactly once
    for r in rep.rows:
        for key in ("dcm_err", "baseline_err", "metrics_oracle", "runtime_s"):
            assert key in r
        assert all(v >= 0 for v in r["dcm_err"].values())


def test_report_errors_within_budget(small_report):
    _suite, rep = small_report
    for r in rep.rows:
        assert max(r["dcm_err"].values()) <= 0.05, r["name"]


def test_dcm_beats_baseline_on_shielded(small_report):
    _suite, rep = small_report
    floor = 1e-3
    for r in rep.rows:
        if not r["shielding_dominant"]:
            continue
        for m in ("avg", "rms", "peak"):
            assert r["dcm_err"][m] < max(r["baseline_err"][m], floor), (r["name"], m)


def test_report_json_and_table(small_report):
    _suite, rep = small_report
    data = json.loads(rep.to_json())
    assert len(data["rows"]) == len(rep.rows)
    text = rep.table()
    assert "benchmark" in text.splitlines()[0]
    assert len(text.splitlines()) == len(rep.rows) + 2
    assert rep.mean_err(metric="rms") >= 0


def test_table_cache_shares_buckets():
    cache = TableCache()
    suite = generate_suite(7, sizes=(10,), slews=(1e-11,))
    mos = [b for b in suite if b.driver.driver_id == "mos_inv"][0]
    t1 = cache.get(mos.driver, mos.slew, 39.5e-15)
    t2 = cache.get(mos.driver, mos.slew, 39.9e-15)
    assert t1 is t2  # same bucket
    t3 = cache.get(mos.driver, mos.slew, 55e-15)
    assert t3 is not t1
