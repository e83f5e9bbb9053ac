"""Canned experiments E1-E4 and report assembly.

E1  single-host slowdown per storage tier (both accelerators)
E2  relative performance vs cache hit ratio and the 80 % thresholds
E3  multi-host scaling over hosts x storage x link
E4  execution-time breakdown vs host count (PCIe storage, Ethernet)

Each experiment returns a :class:`ReportTable`; rows that have a
published counterpart carry the target, its tolerance, the error and a
pass flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Callable, Iterable, Sequence

from . import targets as T
from .engine import (
    SimResult,
    baseline_time,
    fmt,
    hit_ratio_threshold_scan,
    required_hit_ratio,
    simulate,
)
from .errors import MissingCalibrationError, ParameterError
from .platform import ExecutionMode
from .presets import Registry, load_registry
from .workload import DEFAULT_OPS, Trace, generate_trace, trace_summary

EXPERIMENT_IDS = ("E1", "E2", "E3", "E4")

REPORT_COLUMNS = (
    "experiment", "accel", "app", "storage", "link", "hosts", "hit_ratio",
    "compute_s", "io_s", "comm_s", "total_s",
    "metric", "value", "target", "tolerance", "error", "pass", "provenance",
)


@dataclass(frozen=True)
class ExperimentSpec:
    experiment_id: str
    profiles: tuple[str, ...]
    storages: tuple[str, ...] = T.STORAGE_TIERS
    links: tuple[str, ...] = T.LINKS
    hosts: tuple[int, ...] = T.HOST_GRID
    hit_ratio_step: float = 0.01
    ops: int = DEFAULT_OPS
    seed: int = 0
    method: str = "events"
    output_path: str | None = None

    def validate(self, reg: Registry) -> None:
        if self.experiment_id not in EXPERIMENT_IDS:
            raise ParameterError(f"unknown experiment {self.experiment_id!r}; expected {EXPERIMENT_IDS}")
        if not self.profiles or not self.storages:
            raise ParameterError(f"{self.experiment_id}: empty grid")
        for key in self.profiles:
            reg.get_profile(key)
        for name in self.storages:
            reg.get_storage(name)
        for name in self.links:
            reg.get_link(name)


def default_spec(experiment_id: str, **overrides) -> ExperimentSpec:
    all_profiles = tuple(f"{a}/{p}" for a in T.ACCELS for p in T.APPS)
    profiles = {
        "E1": all_profiles,
        "E2": tuple(f"sharp/{p}" for p in T.APPS),
        "E3": all_profiles,
        "E4": ("sharp/resnet20", "tensorfhe/resnet20"),
    }.get(experiment_id)
    if profiles is None:
        raise ParameterError(f"unknown experiment {experiment_id!r}; expected one of {EXPERIMENT_IDS}")
    base = {"experiment_id": experiment_id, "profiles": profiles}
    if experiment_id == "E2":
        base["method"] = "closed-form"
        base["links"] = ()
    if experiment_id == "E4":
        base["storages"] = (T.BREAKDOWN_STORAGE,)
        base["links"] = (T.BREAKDOWN_LINK,)
    base.update(overrides)
    return ExperimentSpec(**base)


@dataclass
class ReportTable:
    experiment_id: str
    rows: list[dict] = field(default_factory=list)

    def add(self, **row) -> dict:
        row.setdefault("experiment", self.experiment_id)
        self.rows.append(row)
        return row

    def target_rows(self) -> list[dict]:
        return [r for r in self.rows if r.get("target") is not None]

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.target_rows())

    def find(self, **match) -> list[dict]:
        return [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]

    def to_csv(self, columns: Sequence[str] = REPORT_COLUMNS) -> str:
        lines = [",".join(columns)]
        for row in self.rows:
            lines.append(",".join(fmt(row.get(c)) for c in columns))
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.experiment_id}.csv"
        path.write_text(self.to_csv(), encoding="utf-8", newline="")
        return path


def check(value: float, target: T.Target | float, tolerance: float | None = None, kind: str = "rel") -> dict:
    """Target/tolerance/error/pass columns for one comparison.

    ``kind`` is ``"rel"`` (relative error), ``"abs"`` (absolute error),
    ``"gt"`` (value must exceed target) or ``"lt"``.
    """
    if isinstance(target, T.Target):
        tolerance = target.tolerance if tolerance is None else tolerance
        kind = target.kind
        provenance = target.provenance
        target = target.value
    else:
        provenance = None
    if kind == "rel":
        error = abs(value - target) / abs(target)
        ok = error <= tolerance
    elif kind == "abs":
        error = abs(value - target)
        ok = error <= tolerance
    elif kind == "gt":
        error, ok, tolerance = value - target, value > target, None
    elif kind == "lt":
        error, ok, tolerance = target - value, value < target, None
    else:
        raise ParameterError(f"unknown tolerance kind {kind!r}")
    out = {"target": target, "tolerance": tolerance, "error": error, "pass": bool(ok)}
    if provenance:
        out["provenance"] = provenance
    return out


def _result_cols(res: SimResult) -> dict:
    return {
        "storage": res.storage,
        "link": res.link,
        "hosts": res.host_count,
        "hit_ratio": res.hit_ratio,
        "compute_s": res.compute_time_s,
        "io_s": res.io_time_s,
        "comm_s": res.comm_time_s,
        "total_s": res.total_time_s,
    }


def derive_metrics(
    results: Iterable[SimResult],
    baseline: Callable[[SimResult], float] | float,
    experiment_id: str = "",
) -> ReportTable:
    """Slowdown (total / baseline) and speedup (baseline / total) rows."""
    table = ReportTable(experiment_id)
    for res in results:
        base = baseline(res) if callable(baseline) else baseline
        if base == 0 or res.total_time_s == 0:
            raise ZeroDivisionError("zero baseline or zero run time")
        common = {"accel": res.accel, "app": res.app, **_result_cols(res)}
        table.add(metric="slowdown", value=res.total_time_s / base, **common)
        table.add(metric="speedup", value=base / res.total_time_s, **common)
    return table


def app_mean(values: Iterable[float]) -> float:
    """Arithmetic mean across applications."""
    return fmean(values)


class _Context:
    """Traces and platforms shared by the experiment builders."""

    def __init__(self, spec: ExperimentSpec, reg: Registry):
        self.spec = spec
        self.reg = reg
        self._traces: dict[str, Trace] = {}

    def trace(self, key: str) -> Trace:
        if key not in self._traces:
            profile = self.reg.get_profile(key)
            clock = self.reg.get_accelerator(profile.accel_name).clock_hz
            self._traces[key] = generate_trace(profile, self.spec.ops, self.spec.seed, clock)
        return self._traces[key]

    def platform(self, key: str, storage: str, link: str | None = None, hosts: int = 1, **kw):
        return self.reg.build_platform(key, storage, link=link or "ethernet", hosts=hosts, **kw)

    def run(self, key: str, platform) -> SimResult:
        return simulate(self.trace(key), platform, method=self.spec.method)


def _split(key: str) -> tuple[str, str]:
    accel, app = key.split("/")
    return accel, app


def _e1(ctx: _Context, table: ReportTable) -> None:
    spec = ctx.spec
    slowdowns: dict[tuple[str, str], dict[str, float]] = {}
    for key in spec.profiles:
        accel, app = _split(key)
        trace = ctx.trace(key)
        base = baseline_time(trace, ctx.platform(key, spec.storages[0]))
        table.add(accel=accel, app=app, metric="baseline_time_s", value=base,
                  **check(base, T.BASELINE_TIME_S[(accel, app)], 1e-6, "rel"))
        summary = trace_summary(trace)
        table.add(accel=accel, app=app, metric="evk_bytes_per_cycle", value=summary.evk_bytes_per_cycle)
        table.add(accel=accel, app=app, metric="io_bytes", value=float(summary.total_io_bytes))
        for storage in spec.storages:
            res = ctx.run(key, ctx.platform(key, storage))
            value = res.total_time_s / base
            slowdowns.setdefault((accel, storage), {})[app] = value
            extra = {}
            if accel == "sharp" and storage in T.SHARP_SLOWDOWN.get(app, {}):
                extra = check(value, T.Target(T.SHARP_SLOWDOWN[app][storage], "fig3a", T.SHARP_SLOWDOWN_TOL))
            table.add(accel=accel, app=app, metric="slowdown", value=value, **_result_cols(res), **extra)

    for (accel, storage), per_app in slowdowns.items():
        if len(per_app) < 2:
            continue
        mean = app_mean(per_app.values())
        extra = {}
        if accel == "tensorfhe" and storage in T.GPU_AVG_SLOWDOWN:
            extra = check(mean, T.Target(T.GPU_AVG_SLOWDOWN[storage], "fig3b", T.GPU_SLOWDOWN_TOL))
        elif accel == "sharp" and storage in T.SHARP_AVG_SLOWDOWN:
            extra = check(mean, T.Target(T.SHARP_AVG_SLOWDOWN[storage], "fig3a-average", T.SHARP_SLOWDOWN_TOL))
        table.add(accel=accel, app="mean", storage=storage, hosts=1, metric="mean_slowdown", value=mean, **extra)

    # aggregate I/O-rate consistency
    keys = set(spec.profiles)
    if {"sharp/resnet20", "sharp/helr"} <= keys:
        r = trace_summary(ctx.trace("sharp/resnet20"))
        h = trace_summary(ctx.trace("sharp/helr"))
        mean_rate = app_mean([r.evk_bytes_per_cycle, h.evk_bytes_per_cycle])
        table.add(accel="sharp", app="mean", metric="mean_evk_bytes_per_cycle", value=mean_rate,
                  **check(mean_rate, T.Target(T.SHARP_MEAN_IO_RATE, "io-pressure", T.SHARP_MEAN_IO_RATE_TOL)))
        ratio = h.evk_bytes_per_cycle / r.evk_bytes_per_cycle
        table.add(accel="sharp", app="helr/resnet20", metric="evk_rate_ratio", value=ratio,
                  **check(ratio, T.Target(T.HELR_RESNET_EVK_RATIO, "io-pressure", T.HELR_RESNET_EVK_RATIO_TOL)))
        for app in T.APPS:
            if f"tensorfhe/{app}" in keys:
                g = trace_summary(ctx.trace(f"tensorfhe/{app}")).total_io_bytes
                s = trace_summary(ctx.trace(f"sharp/{app}")).total_io_bytes
                table.add(accel="tensorfhe", app=app, metric="io_volume_ratio_vs_sharp", value=g / s,
                          **check(g / s, T.Target(T.GPU_IO_VOLUME_RATIO[app], "parameter-sets", 0.01)))


def _e2(ctx: _Context, table: ReportTable) -> None:
    spec = ctx.spec
    f = T.PERFORMANCE_FRACTION
    steps = int(round(1.0 / spec.hit_ratio_step))
    thresholds: dict[str, dict[str, float]] = {}
    for key in spec.profiles:
        accel, app = _split(key)
        trace = ctx.trace(key)
        for storage in spec.storages:
            platform = ctx.platform(key, storage)
            base = baseline_time(trace, platform)
            for i in range(steps + 1):
                h = min(1.0, i * spec.hit_ratio_step)
                res = ctx.run(key, platform.with_(hit_ratio=h))
                table.add(accel=accel, app=app, metric="relative_performance",
                          value=base / res.total_time_s, **_result_cols(res))
            closed = required_hit_ratio(trace, platform, f)
            scanned = hit_ratio_threshold_scan(trace, platform, f, step=spec.hit_ratio_step)
            thresholds.setdefault(storage, {})[app] = closed
            table.add(accel=accel, app=app, storage=storage, hosts=1, metric="required_hit_ratio", value=closed)
            table.add(accel=accel, app=app, storage=storage, hosts=1, metric="required_hit_ratio_scan",
                      value=scanned, provenance="closed-form", **check(scanned, closed, 1e-4, "abs"))
    for storage, per_app in thresholds.items():
        mean = app_mean(per_app.values())
        extra = {}
        if storage in T.HIT_RATIO_80 and len(per_app) == len(T.APPS):
            extra = check(mean, T.Target(T.HIT_RATIO_80[storage], "fig4", T.HIT_RATIO_TOL, "abs"))
        table.add(accel="sharp", app="mean", storage=storage, hosts=1,
                  metric="mean_required_hit_ratio", value=mean, **extra)


def _e3(ctx: _Context, table: ReportTable) -> None:
    spec = ctx.spec
    top = max(spec.hosts)
    speedups: dict[tuple[str, str, str], dict[str, float]] = {}
    for key in spec.profiles:
        accel, app = _split(key)
        for link in spec.links:
            for storage in spec.storages:
                single = None
                for hosts in spec.hosts:
                    res = ctx.run(key, ctx.platform(key, storage, link, hosts))
                    if hosts == 1:
                        single = res.total_time_s
                    value = single / res.total_time_s if single else math.nan
                    table.add(accel=accel, app=app, metric="speedup", value=value,
                              **{**_result_cols(res), "link": link})
                    if hosts == top:
                        speedups.setdefault((accel, link, storage), {})[app] = value
    for (accel, link, storage), per_app in sorted(speedups.items()):
        mean = app_mean(per_app.values())
        extra = {}
        if accel == "sharp" and top == T.MAX_HOSTS and len(per_app) == len(T.APPS):
            kind, quoted = T.SHARP_SCALING[link][storage]
            extra = check(mean, T.Target(T.speedup_target((kind, quoted)), "fig5", T.SHARP_SCALING_TOL))
        table.add(accel=accel, app="mean", storage=storage, link=link, hosts=top,
                  metric="mean_speedup", value=mean, **extra)
        if accel == "sharp" and link == "ethernet":
            trend = "lt" if storage in ("hbm", "ddr5") else "gt"
            table.add(accel=accel, app="mean", storage=storage, link=link, hosts=top,
                      metric="scaling_trend", value=mean, provenance="fig5", **check(mean, 1.0, kind=trend))
    for link in spec.links:
        per = [v for (a, ln, _), d in speedups.items() if a == "tensorfhe" and ln == link for v in d.values()]
        if not per:
            continue
        mean = app_mean(per)
        extra = {}
        if top == T.MAX_HOSTS and len(per) == len(T.APPS) * len(T.STORAGE_TIERS):
            extra = check(mean, T.Target(T.GPU_SCALING[link], "fig5", T.GPU_SCALING_TOL))
        table.add(accel="tensorfhe", app="mean", storage="mean", link=link, hosts=top,
                  metric="mean_speedup", value=mean, **extra)


def _e4(ctx: _Context, table: ReportTable) -> None:
    spec = ctx.spec
    for key in spec.profiles:
        accel, app = _split(key)
        for storage in spec.storages:
            for link in spec.links:
                for hosts in spec.hosts:
                    res = ctx.run(key, ctx.platform(key, storage, link, hosts))
                    fractions = dict(zip(("compute", "io", "comm"), res.fractions))
                    published = None
                    tol = None
                    if app == "resnet20" and storage == T.BREAKDOWN_STORAGE and link == T.BREAKDOWN_LINK:
                        if accel == "sharp":
                            published = T.SHARP_BREAKDOWN.get(hosts)
                            tol = T.SHARP_BREAKDOWN_TOL.get(hosts)
                        else:
                            published = T.GPU_BREAKDOWN.get(hosts)
                            tol = T.GPU_BREAKDOWN_TOL
                    for i, (part, value) in enumerate(fractions.items()):
                        extra = {}
                        if published is not None:
                            label = "fig6a" if accel == "sharp" else "fig6b"
                            extra = check(value, T.Target(published[i], label, tol, "abs"))
                        table.add(accel=accel, app=app, metric=f"{part}_fraction", value=value,
                                  **{**_result_cols(res), "link": link}, **extra)
        accel_obj = ctx.reg.accelerator_for(ctx.reg.get_profile(key))
        if accel_obj.kind.value == "GPU":
            lo, hi = T.GPU_ALPHA_RANGE
            a = accel_obj.compute_scaling_alpha
            table.add(accel=accel, app=app, metric="compute_scaling_alpha", value=a,
                      target=hi, tolerance=None, error=a - hi, provenance="fig6b",
                      **{"pass": bool(lo < a < hi)})


_BUILDERS = {"E1": _e1, "E2": _e2, "E3": _e3, "E4": _e4}


def run_experiment(spec: ExperimentSpec | str, reg: Registry | None = None) -> ReportTable:
    reg = reg or load_registry()
    if isinstance(spec, str):
        spec = default_spec(spec)
    spec.validate(reg)
    if spec.experiment_id in ("E3", "E4") and max(spec.hosts) > 1:
        for key in spec.profiles:
            if reg.calibrated_comm_volume(key) is None:
                accel, app = _split(key)
                raise MissingCalibrationError(accel, app, "communication volume", "calibrate_comm_volume")
    table = ReportTable(spec.experiment_id)
    _BUILDERS[spec.experiment_id](_Context(spec, reg), table)
    if spec.output_path:
        table.write(spec.output_path)
    return table


def plot_report(table: ReportTable, out_dir: str | Path) -> Path:
    """Write a static SVG chart for ``table`` (needs matplotlib)."""
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "fhe-iosim"
    fig, ax = plt.subplots(figsize=(7, 4))
    eid = table.experiment_id
    if eid == "E1":
        rows = table.find(metric="slowdown")
        labels = [f"{r['accel']}/{r['app']}/{r['storage']}" for r in rows]
        ax.bar(range(len(rows)), [r["value"] for r in rows])
        ax.set_xticks(range(len(rows)), labels, rotation=90, fontsize=6)
        ax.set_yscale("log")
        ax.set_ylabel("slowdown vs baseline")
    elif eid == "E2":
        for key in sorted({(r["app"], r["storage"]) for r in table.find(metric="relative_performance")}):
            rows = table.find(metric="relative_performance", app=key[0], storage=key[1])
            ax.plot([r["hit_ratio"] for r in rows], [r["value"] for r in rows], label="/".join(key))
        ax.set_xlabel("cache hit ratio")
        ax.set_ylabel("performance vs baseline")
        ax.legend(fontsize=6)
    elif eid == "E3":
        for key in sorted({(r["accel"], r["app"], r["storage"], r["link"]) for r in table.find(metric="speedup")}):
            rows = table.find(metric="speedup", accel=key[0], app=key[1], storage=key[2], link=key[3])
            ax.plot([r["hosts"] for r in rows], [r["value"] for r in rows], label="/".join(key), lw=0.8)
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("hosts")
        ax.set_ylabel("speedup vs 1 host")
        ax.legend(fontsize=4, ncol=2)
    else:
        for accel in sorted({r["accel"] for r in table.rows}):
            rows = [r for r in table.rows if r["accel"] == accel and r["metric"].endswith("_fraction")]
            hosts = sorted({r["hosts"] for r in rows})
            bottom = [0.0] * len(hosts)
            for part in ("compute", "io", "comm"):
                vals = [next(r["value"] for r in rows if r["hosts"] == h and r["metric"] == f"{part}_fraction") for h in hosts]
                xs = [f"{accel}:{h}" for h in hosts]
                ax.bar(xs, vals, bottom=bottom, label=f"{accel} {part}")
                bottom = [b + v for b, v in zip(bottom, vals)]
        ax.tick_params(axis="x", rotation=90, labelsize=6)
        ax.set_ylabel("fraction of time")
        ax.legend(fontsize=6)
    ax.set_title(eid)
    fig.tight_layout()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{eid}.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
