import math

import pytest
from hypothesis import given, settings, strategies as st

from _random_traces import random_trace
from fhe_iosim.engine import (
    EventLoop,
    baseline_time,
    hit_ratio_threshold_scan,
    required_hit_ratio,
    rows_to_csv,
    run_row,
    simulate,
    simulate_profile,
    sweep,
)
from fhe_iosim.errors import ConsistencyError, InfeasibleError, ParameterError
from fhe_iosim.platform import (
    Accelerator,
    Cluster,
    ExecutionMode,
    NetworkLink,
    Platform,
    StorageTier,
)
from fhe_iosim.workload import Trace


def platform(hosts=1, bw=10**10, link_bw=10**9, volume=10**9, hit=0.0, alpha=0.0, kind="ASIC", **kw):
    return Platform(
        Accelerator("sharp", kind, 10**9, alpha),
        StorageTier("s", bw),
        cluster=Cluster(hosts, NetworkLink("l", link_bw), volume),
        **kw,
    ).with_(hit_ratio=hit)


def test_event_loop_orders_processes():
    loop = EventLoop()
    seen = []

    def proc(name, delays):
        for d in delays:
            yield d
            seen.append((loop.now, name))

    loop.process(proc("a", [1.0, 1.0]))
    loop.process(proc("b", [1.5]))
    assert loop.run() == 2.0
    assert seen == [(1.0, "a"), (1.5, "b"), (2.0, "a")]


def test_rdma_resnet_example(reg, small_traces):
    trace = small_traces["sharp/resnet20"]
    p = reg.build_platform("sharp/resnet20", "rdma")
    res = simulate(trace, p)
    assert res.io_time_s == pytest.approx(trace.total_bytes / p.storage.bandwidth_bytes_per_s)
    assert res.total_time_s / baseline_time(trace, p) == pytest.approx(131.7, rel=0.15)


def test_helr_hbm_example(reg, small_traces):
    trace = small_traces["sharp/helr"]
    p = reg.build_platform("sharp/helr", "hbm")
    assert simulate(trace, p).total_time_s == pytest.approx(0.0142, rel=0.01)


@pytest.mark.parametrize("method", ["events", "closed-form"])
def test_baseline_mode_is_compute_only(small_traces, method):
    trace = small_traces["sharp/resnet20"]
    res = simulate(trace, platform(mode=ExecutionMode.BASELINE), method=method)
    assert res.io_time_s == 0 and res.comm_time_s == 0
    assert res.total_time_s == res.compute_time_s


def test_comm_only_when_keys_present():
    p = platform(hosts=8)
    t = random_trace(5)
    keyless = Trace.from_records(
        [r for r in t.records if not r.kind.uses_key], app_name="x", accel_name="sharp", clock_hz=10**9
    )
    assert simulate(keyless, p).comm_time_s == 0.0
    if t.has_key_ops:
        assert simulate(t, p).comm_time_s > 0.0


def test_conservation_across_hosts():
    t = random_trace(9)
    for n in (1, 4):
        res = simulate(t, platform(hosts=n, hit=0.25))
        assert res.bytes_from_storage * t.header.iterations == pytest.approx(0.75 * t.total_bytes, rel=1e-12)


def test_clock_mismatch():
    t = random_trace(1, clock_hz=2 * 10**9)
    with pytest.raises(ConsistencyError):
        simulate(t, platform())
    slow = simulate(t, platform(), rescale_clock=True)
    # the trace's wall time is preserved: cycles recorded at 2 GHz run half as long
    assert slow.compute_time_s == pytest.approx(t.header.total_cycles / 2e9 / t.header.iterations)


def test_unknown_method():
    with pytest.raises(ParameterError):
        simulate(random_trace(1), platform(), method="magic")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 32), st.floats(0, 1), st.booleans())
def test_oracle_equivalence(seed, hosts, hit, gpu):
    t = random_trace(seed)
    p = platform(hosts=hosts, hit=hit, alpha=0.1 if gpu else 0.0, kind="GPU" if gpu else "ASIC")
    ev = simulate(t, p, method="events")
    cf = simulate(t, p, method="closed-form")
    for a, b in [(ev.compute_time_s, cf.compute_time_s), (ev.io_time_s, cf.io_time_s),
                 (ev.comm_time_s, cf.comm_time_s), (ev.total_time_s, cf.total_time_s)]:
        assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-15)
    assert ev.total_time_s == ev.compute_time_s + ev.io_time_s + ev.comm_time_s
    assert math.isclose(ev.event_clock_s, ev.total_time_s, rel_tol=1e-9, abs_tol=1e-15)
    assert sum(ev.per_kind_time.values()) == pytest.approx(ev.total_time_s, rel=1e-9, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 1), st.floats(1.01, 50))
def test_io_linearity(seed, hit, k):
    t = random_trace(seed)
    cold = simulate(t, platform()).io_time_s
    assert simulate(t, platform(hit=hit)).io_time_s == pytest.approx((1 - hit) * cold, rel=1e-9, abs=1e-15)
    fast = simulate(t, platform(bw=round(10**10 * k))).io_time_s
    assert fast == pytest.approx(cold * 10**10 / round(10**10 * k), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_monotonicity(seed):
    t = random_trace(seed)
    totals = [simulate(t, platform(bw=b)).total_time_s for b in (10**8, 10**9, 10**10, 10**11)]
    assert totals == sorted(totals, reverse=True)
    totals = [simulate(t, platform(hosts=4, link_bw=b)).total_time_s for b in (10**8, 10**9, 10**10)]
    assert totals == sorted(totals, reverse=True)
    totals = [simulate(t, platform(hit=h)).total_time_s for h in (0, 0.3, 0.6, 1.0)]
    assert totals == sorted(totals, reverse=True)
    comms = [simulate(t, platform(hosts=n)).comm_time_s for n in (1, 2, 4, 8, 16, 32)]
    assert comms == sorted(comms)


def test_overlap_mode():
    t = random_trace(4)
    r = simulate(t, platform(hosts=2, overlap=True))
    assert r.total_time_s == max(r.compute_time_s, r.io_time_s) + r.comm_time_s
    assert r.total_time_s <= simulate(t, platform(hosts=2)).total_time_s


def test_determinism(small_traces):
    t = small_traces["tensorfhe/helr"]
    a = simulate(t, platform(hosts=8, hit=0.3), rescale_clock=True)
    b = simulate(t, platform(hosts=8, hit=0.3), rescale_clock=True)
    assert a == b


def test_simulate_profile_matches_trace(reg):
    for key, prof in reg.profiles.items():
        from fhe_iosim.workload import generate_trace

        p = reg.build_platform(prof, "pcie5", hosts=8)
        t = generate_trace(prof, 2000, clock_hz=p.accelerator.clock_hz)
        assert simulate_profile(prof, p).total_time_s == pytest.approx(
            simulate(t, p, method="closed-form").total_time_s, rel=1e-12
        )


def test_required_hit_ratio(reg, small_traces):
    t = small_traces["sharp/resnet20"]
    p = reg.build_platform("sharp/resnet20", "pcie5")
    h = required_hit_ratio(t, p, 0.8)
    assert simulate(t, p.with_(hit_ratio=h), method="closed-form").total_time_s == pytest.approx(
        baseline_time(t, p) / 0.8, rel=1e-9
    )
    assert hit_ratio_threshold_scan(t, p, 0.8) == pytest.approx(h, abs=1e-4)
    assert required_hit_ratio(t, p, 1.0) == 1.0
    cold = simulate(t, p, method="closed-form").total_time_s
    assert required_hit_ratio(t, p, baseline_time(t, p) / cold) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ParameterError):
        required_hit_ratio(t, p, 0.0)


def test_unreachable_budget():
    t = random_trace(3)
    p = platform(hosts=2)
    with pytest.raises(ParameterError):
        required_hit_ratio(t, p, 1.2)
    with pytest.raises(InfeasibleError):
        hit_ratio_threshold_scan(t, p, 1.2)


def test_sweep_axes(reg, small_traces):
    t = small_traces["sharp/helr"]
    p = reg.build_platform("sharp/helr", "hbm")
    pts = sweep(t, p, "hit-ratio", [0, 0.5, 1.0])
    ios = [pt.result.io_time_s for pt in pts]
    assert ios[1] == pytest.approx(ios[0] / 2) and ios[2] == 0
    pts = sweep(t, p, "storage", ["hbm", "ddr5", "pcie5", "rdma"], resolve=lambda k, n: reg.get_storage(n))
    totals = [pt.result.total_time_s for pt in pts]
    assert totals == sorted(totals)
    flat = p.with_(comm_volume_base_bytes=0)
    pts = sweep(t, flat, "hosts", [1, 2, 4, 8, 16, 32])
    for pt in pts:
        assert pt.result.total_time_s == pytest.approx(pts[0].result.total_time_s / pt.value)
    assert [pt.value for pt in sweep(t, p, "hosts", [4, 1, 2], workers=3)] == [4, 1, 2]


def test_sweep_records_failures(reg, small_traces):
    t = small_traces["sharp/helr"]
    p = reg.build_platform("sharp/helr", "hbm")
    pts = sweep(t, p, "hit-ratio", [0.2, 1.5, 0.4])
    assert [pt.ok for pt in pts] == [True, False, True]
    assert "ConfigError" in pts[1].error
    with pytest.raises(ParameterError):
        sweep(t, p, "colour", [1])


def test_csv_rows(reg, small_traces):
    t = small_traces["sharp/helr"]
    row = run_row(t, reg.build_platform("sharp/helr", "rdma", hosts=4))
    text = rows_to_csv([row])
    header, line = text.splitlines()
    assert header == "app,accel,storage,link,hosts,hit_ratio,compute_s,io_s,comm_s,total_s,slowdown,speedup"
    cells = line.split(",")
    assert cells[:5] == ["helr", "sharp", "rdma", "ethernet", "4"]
    assert float(cells[9]) == row["total_s"]
