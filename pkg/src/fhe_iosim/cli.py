"""Command-line entry point.

Exit codes: 0 success, 1 model error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .calibration import calibrate_all, write_calibration
from .engine import CSV_COLUMNS, SWEEP_AXES, apply_axis, baseline_time, fmt, result_row, rows_to_csv, simulate, sweep
from .errors import FheIoSimError, ModelError, ParameterError, PresetNotFoundError, UsageError
from .experiments import EXPERIMENT_IDS, default_spec, plot_report, run_experiment
from .presets import CONFIG_ENV, Registry, load_registry
from .trace_io import read_trace, write_trace
from .workload import DEFAULT_OPS, AppProfile, Trace, generate_trace, trace_summary

log = logging.getLogger("fhe_iosim")

STORAGE_CHOICES = ("hbm", "ddr5", "pcie5", "rdma")
LINK_CHOICES = ("ethernet", "fastfabric")


@dataclass
class RunConfig:
    """Fully resolved settings for one invocation (shown by ``--dry-run``)."""

    subcommand: str
    profile: str | None = None
    trace: str | None = None
    storage: str = "hbm"
    link: str = "ethernet"
    hosts: int = 1
    hit_ratio: float = 0.0
    mode: str = "cold"
    overlap: bool = False
    seed: int = 0
    ops: int = DEFAULT_OPS
    out: str | None = None
    json: bool = False
    config_dir: str | None = None
    verbosity: int = 0
    overrides: dict[str, Any] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config-dir", help=f"preset overlay directory (default: ${CONFIG_ENV})")
    p.add_argument("--out", help="output directory (or file for `generate`)")
    p.add_argument("--json", action="store_true", help="emit JSON lines instead of CSV")
    p.add_argument("--dry-run", action="store_true", help="validate and print the resolved configuration")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_platform(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", help="application profile, e.g. sharp/resnet20 (or just the app with --accel)")
    p.add_argument("--accel", help="accelerator preset (sharp, tensorfhe)")
    p.add_argument("--trace", help="run a trace file instead of generating one")
    p.add_argument("--storage", choices=STORAGE_CHOICES, default="hbm")
    p.add_argument("--link", choices=LINK_CHOICES, default="ethernet")
    p.add_argument("--hosts", type=int, default=1)
    p.add_argument("--hit-ratio", type=float, default=0.0)
    p.add_argument("--mode", choices=("baseline", "cold"), default="cold")
    p.add_argument("--overlap", action="store_true", help="overlap compute with storage I/O")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ops", type=int, default=DEFAULT_OPS)
    p.add_argument("--clock", type=int, help="override accelerator clock (Hz)")
    p.add_argument("--storage-bandwidth", type=int, help="override storage bandwidth (bytes/s)")
    p.add_argument("--link-bandwidth", type=int, help="override link bandwidth (bytes/s)")
    p.add_argument("--dnum", type=int, help="override key-switching decomposition number")
    p.add_argument("--rescale-clock", action="store_true", help="accept traces recorded at another clock")
    p.add_argument("--method", choices=("events", "closed-form"), default="events")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fhe-iosim", description="Storage-I/O simulator for CKKS accelerators")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("presets", help="list presets")
    p.add_argument("kind", nargs="?", choices=("params", "accelerators", "storage", "links", "profiles", "calibration"))
    _add_common(p)

    p = sub.add_parser("generate", help="generate a synthetic trace file")
    _add_platform(p)
    _add_common(p)

    p = sub.add_parser("summary", help="aggregate statistics of a trace file")
    p.add_argument("trace_file")
    _add_common(p)

    p = sub.add_parser("run", help="simulate one configuration")
    _add_platform(p)
    _add_common(p)

    p = sub.add_parser("sweep", help="simulate along one axis")
    _add_platform(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", help="comma-separated axis values")
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="stop", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--workers", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("calibrate", help="refit calibration constants from published measurements")
    p.add_argument("--write", action="store_true", help="write calibration.json into --out (or the config dir)")
    _add_common(p)

    p = sub.add_parser("experiment", help="reproduce one figure's data (E1-E4)")
    p.add_argument("experiment_id", choices=EXPERIMENT_IDS + ("all",))
    p.add_argument("--ops", type=int, default=DEFAULT_OPS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", action="store_true", help="also write an SVG chart")
    _add_common(p)
    return parser


def _resolve_profile_key(args) -> str:
    profile, accel = args.profile, args.accel
    if profile is None:
        raise ParameterError("--profile is required (e.g. --profile sharp/resnet20)")
    if "/" in profile:
        if accel and profile.split("/")[0] != accel:
            raise ParameterError(f"--accel {accel} contradicts --profile {profile}")
        return profile
    if not accel:
        raise ParameterError("give --profile accel/app, or --profile app with --accel")
    return f"{accel}/{profile}"


def _resolved_profile(reg: Registry, key: str, args) -> AppProfile:
    profile = reg.get_profile(key)
    if getattr(args, "dnum", None) is not None:
        params = dataclasses.replace(profile.params, dnum=args.dnum)
        profile = dataclasses.replace(profile, params=params, evk_set_bytes=None)
    return profile


def _config(args) -> RunConfig:
    cfg = RunConfig(subcommand=args.subcommand, config_dir=args.config_dir, out=args.out,
                    json=args.json, verbosity=args.verbose)
    for name in ("storage", "link", "hosts", "hit_ratio", "mode", "overlap", "seed", "ops", "trace"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    for name in ("clock", "storage_bandwidth", "link_bandwidth", "dnum"):
        value = getattr(args, name, None)
        if value is not None:
            cfg.overrides[name] = value
    return cfg


def _check_overrides(cfg: RunConfig) -> None:
    if cfg.hosts < 1:
        raise ParameterError("--hosts must be >= 1")
    if not 0.0 <= cfg.hit_ratio <= 1.0:
        raise ParameterError("--hit-ratio must lie in [0, 1]")
    for name, value in cfg.overrides.items():
        if value <= 0:
            raise ParameterError(f"--{name.replace('_', '-')} must be positive")


def _platform(reg: Registry, profile: AppProfile, cfg: RunConfig):
    return reg.build_platform(
        profile,
        cfg.storage,
        link=cfg.link,
        hosts=cfg.hosts,
        hit_ratio=cfg.hit_ratio,
        mode=cfg.mode,
        overlap=cfg.overlap,
        clock_hz=cfg.overrides.get("clock"),
        storage_bandwidth=cfg.overrides.get("storage_bandwidth"),
        link_bandwidth=cfg.overrides.get("link_bandwidth"),
    )


def _emit(rows: list[dict], columns: Sequence[str], cfg: RunConfig, name: str) -> None:
    if cfg.json:
        text = "".join(json.dumps({c: row.get(c) for c in columns}, sort_keys=False) + "\n" for row in rows)
    else:
        text = rows_to_csv(rows, columns)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{name}.{'jsonl' if cfg.json else 'csv'}"
        path.write_text(text, encoding="utf-8", newline="")
        log.info("wrote %s", path)
    else:
        sys.stdout.write(text)


def _dry_run(cfg: RunConfig, resolved: dict) -> int:
    payload = dataclasses.asdict(cfg)
    payload["resolved"] = resolved
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return 0


def _trace_for(reg: Registry, args, cfg: RunConfig) -> tuple[Trace, AppProfile]:
    if args.trace:
        trace = read_trace(args.trace)
        key = f"{trace.header.accel_name}/{trace.header.app_name}"
        return trace, _resolved_profile(reg, key, args)
    key = _resolve_profile_key(args)
    cfg.profile = key
    profile = _resolved_profile(reg, key, args)
    clock = cfg.overrides.get("clock") or reg.get_accelerator(profile.accel_name).clock_hz
    return generate_trace(profile, cfg.ops, cfg.seed, clock), profile


def cmd_presets(args, reg: Registry, cfg: RunConfig) -> int:
    tables = {
        "params": {k: v.to_dict() for k, v in reg.params.items()},
        "accelerators": {k: {"kind": v.kind.value, "clock_hz": v.clock_hz} for k, v in reg.accelerators.items()},
        "storage": {k: v.bandwidth_bytes_per_s for k, v in reg.storage.items()},
        "links": {k: v.bandwidth_bytes_per_s for k, v in reg.links.items()},
        "profiles": {
            k: {"baseline_time_s": p.baseline_time_s, "evk_bytes_per_cycle": p.evk_bytes_per_cycle,
                "ct_bytes_per_cycle": p.ct_bytes_per_cycle, "distinct_evk_count": p.distinct_evk_count,
                "evk_set_bytes": p.evk_set_bytes, "iterations": p.iterations}
            for k, p in reg.profiles.items()
        },
        "calibration": reg.calibration,
    }
    if args.dry_run:
        return _dry_run(cfg, {"kinds": list(tables)})
    chosen = {args.kind: tables[args.kind]} if args.kind else tables
    sys.stdout.write(json.dumps(chosen, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_generate(args, reg: Registry, cfg: RunConfig) -> int:
    key = _resolve_profile_key(args)
    cfg.profile = key
    profile = _resolved_profile(reg, key, args)
    if cfg.ops < 10:
        raise ParameterError(f"--ops must be >= 10, got {cfg.ops}")
    clock = cfg.overrides.get("clock") or reg.get_accelerator(profile.accel_name).clock_hz
    if args.dry_run:
        return _dry_run(cfg, {"profile": key, "clock_hz": clock, "params": profile.params.to_dict()})
    trace = generate_trace(profile, cfg.ops, cfg.seed, clock)
    out = Path(cfg.out) if cfg.out else Path(f"{key.replace('/', '_')}_s{cfg.seed}.trace.jsonl")
    if cfg.out and (out.is_dir() or cfg.out.endswith(("/", "\\"))):
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"{key.replace('/', '_')}_s{cfg.seed}.trace.jsonl"
    write_trace(trace, out)
    sys.stdout.write(f"{out}\n")
    return 0


def cmd_summary(args, reg: Registry, cfg: RunConfig) -> int:
    if args.dry_run:
        return _dry_run(cfg, {"trace_file": args.trace_file})
    summary = trace_summary(read_trace(args.trace_file))
    sys.stdout.write(json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def _row(trace: Trace, platform, result, cfg: RunConfig, rescale: bool) -> dict:
    base = baseline_time(trace, platform, rescale_clock=rescale)
    single = result.total_time_s
    if platform.hosts > 1:
        single = simulate(trace, platform.with_(hosts=1), method="closed-form", rescale_clock=rescale).total_time_s
    return result_row(result, base, single)


def cmd_run(args, reg: Registry, cfg: RunConfig) -> int:
    _check_overrides(cfg)
    if args.dry_run:
        if args.trace:
            header = read_trace(args.trace).header
            key = f"{header.accel_name}/{header.app_name}"
        else:
            key = _resolve_profile_key(args)
        cfg.profile = key
        profile = _resolved_profile(reg, key, args)
        return _dry_run(cfg, {"platform": _platform(reg, profile, cfg).describe()})
    trace, profile = _trace_for(reg, args, cfg)
    platform = _platform(reg, profile, cfg)
    result = simulate(trace, platform, method=args.method, rescale_clock=args.rescale_clock)
    _emit([_row(trace, platform, result, cfg, args.rescale_clock)], CSV_COLUMNS, cfg, "run")
    return 0


def _sweep_values(args) -> list:
    if args.values is not None:
        if args.start is not None or args.stop is not None:
            raise ParameterError("give either --values or --from/--to/--step")
        raw = [v.strip() for v in args.values.split(",") if v.strip()]
        if args.axis == "hosts":
            try:
                return [int(v) for v in raw]
            except ValueError:
                raise ParameterError(f"--values for hosts must be integers: {args.values}") from None
        if args.axis == "hit-ratio":
            try:
                return [float(v) for v in raw]
            except ValueError:
                raise ParameterError(f"--values for hit-ratio must be numbers: {args.values}") from None
        return raw
    if args.axis in ("storage", "link"):
        if args.start is not None:
            raise ParameterError(f"--from/--to/--step do not apply to the {args.axis} axis")
        return list(STORAGE_CHOICES if args.axis == "storage" else LINK_CHOICES)
    if args.start is None or args.stop is None or not args.step:
        raise ParameterError("numeric sweeps need --values or all of --from, --to, --step")
    if args.step <= 0 or args.stop < args.start:
        raise ParameterError("need --step > 0 and --to >= --from")
    count = int(round((args.stop - args.start) / args.step)) + 1
    values = [min(args.stop, round(args.start + i * args.step, 12)) for i in range(count)]
    if args.axis == "hosts":
        return [int(round(v)) for v in values]
    return values


def cmd_sweep(args, reg: Registry, cfg: RunConfig) -> int:
    _check_overrides(cfg)
    values = _sweep_values(args)
    cfg.extra = {"axis": args.axis, "values": values}
    if args.dry_run:
        key = _resolve_profile_key(args) if not args.trace else None
        resolved = {"point_count": len(values)}
        if key:
            cfg.profile = key
            resolved["platform"] = _platform(reg, _resolved_profile(reg, key, args), cfg).describe()
        return _dry_run(cfg, resolved)
    trace, profile = _trace_for(reg, args, cfg)
    platform = _platform(reg, profile, cfg)

    def resolve(kind: str, name: str):
        return reg.get_storage(name) if kind == "storage" else reg.get_link(name)

    points = sweep(trace, platform, args.axis, values, method=args.method, workers=args.workers,
                   resolve=resolve, rescale_clock=args.rescale_clock)
    rows = []
    failures = 0
    for pt in points:
        if pt.ok:
            p = apply_axis(platform, args.axis, pt.value, resolve)
            row = _row(trace, p, pt.result, cfg, args.rescale_clock)
        else:
            failures += 1
            log.error("sweep point %s=%s failed: %s", args.axis, pt.value, pt.error)
            row = {"app": trace.header.app_name, "accel": platform.accelerator.name}
        row[args.axis.replace("-", "_") + "_value"] = pt.value
        row["error"] = pt.error or ""
        rows.append(row)
    columns = (args.axis.replace("-", "_") + "_value",) + CSV_COLUMNS + ("error",)
    _emit(rows, columns, cfg, "sweep")
    return 1 if failures else 0


def cmd_calibrate(args, reg: Registry, cfg: RunConfig) -> int:
    if args.dry_run:
        return _dry_run(cfg, {"profiles": sorted(reg.profiles)})
    cal = calibrate_all(reg)
    if args.write:
        target = cfg.out or cfg.config_dir
        if not target:
            raise ParameterError("--write needs --out DIR or a config directory")
        Path(target).mkdir(parents=True, exist_ok=True)
        write_calibration(cal, Path(target) / "calibration.json")
    rows = [{"kind": "compute_scaling_alpha", "key": k, "value": v} for k, v in sorted(cal["compute_scaling_alpha"].items())]
    rows += [{"kind": "comm_volume_base_bytes", "key": k, "value": v} for k, v in sorted(cal["comm_volume_base_bytes"].items())]
    if cfg.json:
        sys.stdout.write("".join(json.dumps(r) + "\n" for r in rows))
    else:
        sys.stdout.write("kind,key,value\n" + "".join(f"{r['kind']},{r['key']},{fmt(r['value'])}\n" for r in rows))
    return 0


def cmd_experiment(args, reg: Registry, cfg: RunConfig) -> int:
    ids = EXPERIMENT_IDS if args.experiment_id == "all" else (args.experiment_id,)
    specs = [default_spec(e, ops=args.ops, seed=args.seed) for e in ids]
    for spec in specs:
        spec.validate(reg)
    if args.dry_run:
        return _dry_run(cfg, {"experiments": [dataclasses.asdict(s) for s in specs]})
    status = 0
    for spec in specs:
        table = run_experiment(spec, reg)
        if cfg.out:
            path = table.write(cfg.out)
            log.info("wrote %s", path)
            if args.plot:
                plot_report(table, cfg.out)
        if cfg.json:
            sys.stdout.write("".join(json.dumps(r, default=str) + "\n" for r in table.rows))
        elif not cfg.out:
            sys.stdout.write(table.to_csv())
        for row in table.target_rows():
            if not row["pass"]:
                log.warning("%s %s %s/%s: %.6g vs target %.6g", spec.experiment_id, row["metric"],
                            row.get("accel"), row.get("app"), row["value"], row["target"])
        n_rows = len(table.target_rows())
        n_pass = sum(1 for r in table.target_rows() if r["pass"])
        sys.stderr.write(f"{spec.experiment_id}: {n_pass}/{n_rows} targets within tolerance\n")
    return status


_COMMANDS = {
    "presets": cmd_presets,
    "generate": cmd_generate,
    "summary": cmd_summary,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "calibrate": cmd_calibrate,
    "experiment": cmd_experiment,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    cfg = _config(args)
    try:
        reg = load_registry(cfg.config_dir)
        return _COMMANDS[args.subcommand](args, reg, cfg)
    except PresetNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except ModelError as exc:
        sys.stderr.write(f"model error: {exc}\n")
        return 1
    except FheIoSimError as exc:  # pragma: no cover - every subclass is one of the above
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
