"""Trace execution on a platform.

Two routes compute the same numbers. :func:`simulate` (``method="events"``)
replays the trace record by record on a discrete-event loop; the
``"closed-form"`` route evaluates the aggregate time model from the trace
header only. Under a bandwidth-only storage model both are exact, which
the test suite checks.

Under residue-polynomial-level parallelism every host holds an equal
share of limbs, so all hosts follow the same timeline and the event loop
replays a single representative host.
"""

from __future__ import annotations

import heapq
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Generator, Iterable, Sequence

from .errors import ConsistencyError, FheIoSimError, InfeasibleError, ParameterError
from .platform import CacheModel, ExecutionMode, NetworkLink, Platform, StorageTier
from .workload import KEY_KINDS, AppProfile, OpKind, Trace

METHODS = ("events", "closed-form")
SWEEP_AXES = ("storage", "hit-ratio", "hosts", "link")
CSV_COLUMNS = (
    "app", "accel", "storage", "link", "hosts", "hit_ratio",
    "compute_s", "io_s", "comm_s", "total_s", "slowdown", "speedup",
)


@dataclass(frozen=True)
class SimResult:
    total_time_s: float
    compute_time_s: float
    io_time_s: float
    comm_time_s: float
    bytes_from_storage: float
    host_count: int
    per_kind_time: dict[OpKind, float] = field(default_factory=dict)
    app: str = ""
    accel: str = ""
    storage: str = ""
    link: str = ""
    hit_ratio: float = 0.0
    overlap: bool = False
    event_clock_s: float | None = None

    @property
    def fractions(self) -> tuple[float, float, float]:
        """(compute, io, comm) shares of the serial total."""
        s = self.compute_time_s + self.io_time_s + self.comm_time_s
        if s == 0:
            return (0.0, 0.0, 0.0)
        return (self.compute_time_s / s, self.io_time_s / s, self.comm_time_s / s)


class EventLoop:
    """Minimal deterministic discrete-event scheduler.

    Processes are generators that yield non-negative delays; ties are
    broken by scheduling order.
    """

    def __init__(self) -> None:
        self.now = 0.0
        self._queue: list[tuple[float, int, Generator]] = []
        self._seq = itertools.count()

    def process(self, gen: Generator[float, None, Any]) -> None:
        heapq.heappush(self._queue, (self.now, next(self._seq), gen))

    def run(self) -> float:
        while self._queue:
            when, _, gen = heapq.heappop(self._queue)
            self.now = when
            try:
                delay = next(gen)
            except StopIteration:
                continue
            if delay < 0:
                raise ValueError("negative delay")
            heapq.heappush(self._queue, (when + delay, next(self._seq), gen))
        return self.now


def _cycle_scale(trace: Trace, platform: Platform, rescale_clock: bool) -> float:
    trace_clock = trace.header.clock_hz
    clock = platform.accelerator.clock_hz
    if trace_clock == clock:
        return 1.0
    if not rescale_clock:
        raise ConsistencyError(
            f"trace recorded at {trace_clock} Hz but platform {platform.accelerator.name} "
            f"runs at {clock} Hz; pass rescale_clock=True (--rescale-clock) to convert"
        )
    # keep each op's duration: a cycle count at trace_clock becomes cycles * clock / trace_clock
    return clock / trace_clock


def _labels(trace: Trace, platform: Platform) -> dict:
    link = platform.cluster.link
    return {
        "app": trace.header.app_name,
        "accel": platform.accelerator.name,
        "storage": platform.storage.name,
        "link": link.name if link and platform.hosts > 1 else "",
        "hit_ratio": platform.cache.hit_ratio,
        "overlap": platform.overlap,
    }


def _compose(compute: float, io: float, comm: float, overlap: bool) -> float:
    if overlap:
        return max(compute, io) + comm
    return compute + io + comm


def simulate_aggregate(
    total_cycles: float,
    total_bytes: float,
    has_key_ops: bool,
    platform: Platform,
    *,
    iterations: int = 1,
    app: str = "",
) -> SimResult:
    """Closed-form time model on aggregate totals."""
    compute = platform.compute_time(total_cycles) / iterations
    io = platform.io_time(total_bytes) / iterations
    comm = platform.comm_time(has_key_ops) / iterations
    link = platform.cluster.link
    return SimResult(
        total_time_s=_compose(compute, io, comm, platform.overlap),
        compute_time_s=compute,
        io_time_s=io,
        comm_time_s=comm,
        bytes_from_storage=platform.io_bytes(total_bytes) / iterations,
        host_count=platform.hosts,
        app=app,
        accel=platform.accelerator.name,
        storage=platform.storage.name,
        link=link.name if link and platform.hosts > 1 else "",
        hit_ratio=platform.cache.hit_ratio,
        overlap=platform.overlap,
    )


def profile_totals(profile: AppProfile, clock_hz: int) -> tuple[int, int]:
    """(cycles, off-chip bytes) of one iteration, rounded as in generation."""
    cycles = round(profile.baseline_time_s * clock_hz)
    volume = round(profile.evk_bytes_per_cycle * cycles) + round(profile.ct_bytes_per_cycle * cycles)
    return cycles, volume


def simulate_profile(profile: AppProfile, platform: Platform) -> SimResult:
    """Closed-form result for the trace ``generate_trace(profile)`` would build."""
    cycles, volume = profile_totals(profile, platform.accelerator.clock_hz)
    has_keys = any(profile.op_mix[k] > 0 for k in KEY_KINDS)
    return simulate_aggregate(cycles, volume, has_keys, platform, app=profile.app_name)


def _simulate_closed_form(trace: Trace, platform: Platform, scale: float) -> SimResult:
    h = trace.header
    return simulate_aggregate(
        h.total_cycles * scale,
        trace.total_bytes,
        trace.has_key_ops,
        platform,
        iterations=h.iterations,
        app=h.app_name,
    )


def _simulate_events(trace: Trace, platform: Platform, scale: float) -> SimResult:
    clock = platform.accelerator.clock_hz
    n = platform.hosts
    compute_scale = platform.compute_scale()
    bandwidth = platform.storage.bandwidth_bytes_per_s
    miss = 0.0 if platform.mode is ExecutionMode.BASELINE else 1.0 - platform.cache.hit_ratio
    comm_total = platform.comm_time(trace.has_key_ops)
    evk_total = trace.header.total_evk_bytes

    acc = {"compute": 0.0, "io": 0.0, "comm": 0.0, "bytes": 0.0}
    per_kind = {kind: 0.0 for kind in OpKind}

    def host() -> Generator[float, None, None]:
        for r in trace.records:
            fetch_bytes = miss * r.total_bytes / n
            fetch = fetch_bytes / bandwidth
            compute = r.compute_cycles * scale / clock * compute_scale
            comm = comm_total * r.evk_bytes / evk_total if (comm_total and r.evk_bytes) else 0.0
            acc["bytes"] += fetch_bytes
            acc["io"] += fetch
            acc["compute"] += compute
            acc["comm"] += comm
            per_kind[r.kind] += fetch + compute + comm
            # operands arrive, the op runs, then the key-switch exchange;
            # the phases are serial, so the host is busy for their sum
            busy = fetch + compute + comm
            if busy:
                yield busy

    loop = EventLoop()
    loop.process(host())
    end = loop.run()

    iters = trace.header.iterations
    compute, io, comm = acc["compute"] / iters, acc["io"] / iters, acc["comm"] / iters
    return SimResult(
        total_time_s=_compose(compute, io, comm, platform.overlap),
        compute_time_s=compute,
        io_time_s=io,
        comm_time_s=comm,
        bytes_from_storage=acc["bytes"] * n / iters,
        host_count=n,
        per_kind_time={k: v / iters for k, v in per_kind.items()},
        event_clock_s=end / iters,
        **_labels(trace, platform),
    )


def simulate(
    trace: Trace,
    platform: Platform,
    *,
    method: str = "events",
    rescale_clock: bool = False,
) -> SimResult:
    """Execute ``trace`` on ``platform``; times are per iteration."""
    if method not in METHODS:
        raise ParameterError(f"method must be one of {METHODS}, got {method!r}")
    scale = _cycle_scale(trace, platform, rescale_clock)
    if method == "closed-form":
        return _simulate_closed_form(trace, platform, scale)
    return _simulate_events(trace, platform, scale)


def baseline_time(trace: Trace, platform: Platform, **kw) -> float:
    """Ideal single-host, all-on-chip time of ``trace`` on this accelerator."""
    ideal = platform.with_(mode=ExecutionMode.BASELINE, hosts=1, overlap=False)
    return simulate(trace, ideal, method="closed-form", **kw).total_time_s


def required_hit_ratio(
    trace: Trace, platform: Platform, performance_fraction: float, *, rescale_clock: bool = False
) -> float:
    """Smallest cache hit ratio reaching ``performance_fraction`` of the baseline.

    The baseline is the same platform in baseline mode (no storage I/O,
    communication unchanged).
    """
    f = performance_fraction
    if not 0.0 < f <= 1.0:
        raise ParameterError(f"performance fraction must lie in (0, 1], got {f}")
    cold = platform.with_(mode=ExecutionMode.COLD, hit_ratio=0.0)
    res = simulate(trace, cold, method="closed-form", rescale_clock=rescale_clock)
    floor = res.compute_time_s + res.comm_time_s
    budget = floor / f
    if platform.overlap:
        allowed_io = budget - res.comm_time_s
    else:
        allowed_io = budget - floor
    if budget < floor:
        raise InfeasibleError(
            f"compute alone ({floor:.6g} s) exceeds the budget ({budget:.6g} s)", floor, budget
        )
    if res.io_time_s == 0:
        return 0.0
    if f == 1.0 and not platform.overlap:
        return 1.0
    return min(1.0, max(0.0, 1.0 - allowed_io / res.io_time_s))


def hit_ratio_threshold_scan(
    trace: Trace,
    platform: Platform,
    performance_fraction: float,
    *,
    step: float = 0.01,
    resolution: float = 1e-4,
    method: str = "closed-form",
) -> float:
    """Grid scan plus bisection for the smallest adequate hit ratio.

    Independent of :func:`required_hit_ratio`: only forward simulations
    are used. The result is within ``resolution`` above the true threshold.
    """
    budget = baseline_time(trace, platform) / performance_fraction
    cold = platform.with_(mode=ExecutionMode.COLD)

    def ok(h: float) -> bool:
        return simulate(trace, cold.with_(hit_ratio=h), method=method).total_time_s <= budget * (1 + 1e-12)

    steps = int(round(1.0 / step))
    grid = [min(1.0, i * step) for i in range(steps + 1)]
    if not ok(1.0):
        raise InfeasibleError("even a perfect cache misses the budget", math.nan, budget)
    if ok(grid[0]):
        return 0.0
    hi = next(h for h in grid if ok(h))
    lo = hi - step
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class SweepPoint:
    axis: str
    value: Any
    result: SimResult | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def apply_axis(platform: Platform, axis: str, value: Any, resolve: Callable[[str, str], Any] | None) -> Platform:
    if axis == "storage":
        tier = value if isinstance(value, StorageTier) else resolve("storage", value)
        return platform.with_(storage=tier)
    if axis == "link":
        link = value if isinstance(value, NetworkLink) else resolve("link", value)
        return platform.with_(link=link)
    if axis == "hit-ratio":
        return platform.with_(cache=CacheModel(float(value)))
    if axis == "hosts":
        if isinstance(value, bool) or int(value) != value:
            raise ParameterError(f"host count must be an integer, got {value!r}")
        return platform.with_(hosts=int(value))
    raise ParameterError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def _default_resolve(kind: str, name: str):
    from . import presets

    return presets.get_storage(name) if kind == "storage" else presets.get_link(name)


def sweep(
    trace: Trace,
    platform: Platform,
    axis: str,
    values: Iterable[Any],
    *,
    method: str = "events",
    workers: int | None = None,
    resolve: Callable[[str, str], Any] | None = None,
    rescale_clock: bool = False,
) -> list[SweepPoint]:
    """Independent simulations along one axis, in input order.

    A failing point is recorded in its :class:`SweepPoint` and the sweep
    carries on.
    """
    if axis not in SWEEP_AXES:
        raise ParameterError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    resolve = resolve or _default_resolve
    values = list(values)

    def point(value: Any) -> SweepPoint:
        try:
            p = apply_axis(platform, axis, value, resolve)
            return SweepPoint(axis, value, simulate(trace, p, method=method, rescale_clock=rescale_clock))
        except FheIoSimError as exc:
            return SweepPoint(axis, value, None, f"{type(exc).__name__}: {exc}")

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(point, values))
    return [point(v) for v in values]


def fmt(value: Any) -> str:
    """Locale-free, round-trippable CSV cell."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def result_row(result: SimResult, baseline_total_s: float | None = None, single_host_total_s: float | None = None) -> dict:
    slowdown = result.total_time_s / baseline_total_s if baseline_total_s else None
    speedup = single_host_total_s / result.total_time_s if single_host_total_s and result.total_time_s else None
    return {
        "app": result.app,
        "accel": result.accel,
        "storage": result.storage,
        "link": result.link,
        "hosts": result.host_count,
        "hit_ratio": result.hit_ratio,
        "compute_s": result.compute_time_s,
        "io_s": result.io_time_s,
        "comm_s": result.comm_time_s,
        "total_s": result.total_time_s,
        "slowdown": slowdown,
        "speedup": speedup,
    }


def run_row(trace: Trace, platform: Platform, *, method: str = "events", rescale_clock: bool = False) -> dict:
    """Simulate and attach slowdown (vs ideal) and speedup (vs one host)."""
    result = simulate(trace, platform, method=method, rescale_clock=rescale_clock)
    base = baseline_time(trace, platform, rescale_clock=rescale_clock)
    single = result.total_time_s
    if platform.hosts > 1:
        single = simulate(trace, platform.with_(hosts=1), method="closed-form", rescale_clock=rescale_clock).total_time_s
    return result_row(result, base, single)


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str] = CSV_COLUMNS) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(row.get(c)) for c in columns))
    return "\n".join(lines) + "\n"
