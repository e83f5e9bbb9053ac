"""Preset registry.

Presets ship as JSON files inside the package. Setting
``FHE_IOSIM_CONFIG_DIR`` to a directory overlays files of the same name
found there: each top-level entry replaces the shipped entry with the
same key, other shipped entries stay.

Files and schemas:

``params.json``        name -> CkksParams fields
``accelerators.json``  name -> {kind, clock_hz}
``storage.json``       name -> {bandwidth_bytes_per_s, nominal?}
``links.json``         name -> {bandwidth_bytes_per_s, nominal?}
``profiles.json``      "accel/app" -> {params, baseline_time_s, op_mix,
                       distinct_evk_count, iterations?, evk_set_bytes?,
                       and either evk_bytes_per_cycle + ct_bytes_per_cycle
                       or io_volume_ratio {reference, ratio}}
``calibration.json``   {compute_scaling_alpha: {accel: float},
                       comm_volume_base_bytes: {"accel/app": int}, notes?}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import ConfigError, MissingCalibrationError, PresetNotFoundError, UsageError
from .platform import (
    Accelerator,
    AcceleratorKind,
    CacheModel,
    Cluster,
    ExecutionMode,
    NetworkLink,
    Platform,
    StorageTier,
)
from .sizing import CkksParams
from .workload import AppProfile

CONFIG_ENV = "FHE_IOSIM_CONFIG_DIR"
FILES = ("params", "accelerators", "storage", "links", "profiles", "calibration")

_PROFILE_FIELDS = {
    "params", "baseline_time_s", "evk_bytes_per_cycle", "ct_bytes_per_cycle", "op_mix",
    "distinct_evk_count", "evk_set_bytes", "iterations", "io_volume_ratio",
}


def _load_json(source: str, text: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    return data


def _raw_presets(config_dir: str | None) -> dict[str, tuple[dict, dict[str, str]]]:
    """File name -> (merged data, entry key -> source path)."""
    out = {}
    pkg = resources.files("fhe_iosim") / "presets"
    for name in FILES:
        shipped = pkg / f"{name}.json"
        data = _load_json(f"<builtin>/{name}.json", shipped.read_text(encoding="utf-8"))
        origin = {k: f"<builtin>/{name}.json" for k in data}
        if config_dir:
            path = Path(config_dir) / f"{name}.json"
            if path.is_file():
                extra = _load_json(str(path), path.read_text(encoding="utf-8"))
                if name == "calibration":
                    for section, values in extra.items():
                        if isinstance(values, dict) and isinstance(data.get(section), dict):
                            data[section] = {**data[section], **values}
                        else:
                            data[section] = values
                        origin[section] = str(path)
                else:
                    data.update(extra)
                    origin.update({k: str(path) for k in extra})
        out[name] = (data, origin)
    return out


@dataclass(frozen=True)
class Registry:
    params: dict[str, CkksParams]
    accelerators: dict[str, Accelerator]
    storage: dict[str, StorageTier]
    links: dict[str, NetworkLink]
    profiles: dict[str, AppProfile]
    calibration: dict[str, Any]
    origins: dict[str, dict[str, str]]

    def _get(self, table: dict, kind: str, name: str):
        try:
            return table[name]
        except KeyError:
            raise PresetNotFoundError(kind, name, list(table)) from None

    def get_params(self, name: str) -> CkksParams:
        return self._get(self.params, "params", name)

    def get_accelerator(self, name: str) -> Accelerator:
        return self._get(self.accelerators, "accelerator", name)

    def get_storage(self, name: str) -> StorageTier:
        return self._get(self.storage, "storage", name)

    def get_link(self, name: str) -> NetworkLink:
        return self._get(self.links, "link", name)

    def get_profile(self, key: str) -> AppProfile:
        return self._get(self.profiles, "profile", key)

    def calibrated_alpha(self, accel: str) -> float | None:
        return self.calibration.get("compute_scaling_alpha", {}).get(accel)

    def calibrated_comm_volume(self, profile_key: str) -> int | None:
        return self.calibration.get("comm_volume_base_bytes", {}).get(profile_key)

    def accelerator_for(self, profile: AppProfile, *, require_alpha: bool = False) -> Accelerator:
        accel = self.get_accelerator(profile.accel_name)
        if accel.kind is AcceleratorKind.GPU:
            alpha = self.calibrated_alpha(accel.name)
            if alpha is None:
                if require_alpha:
                    raise MissingCalibrationError(accel.name, profile.app_name, "compute scaling alpha", "calibrate_gpu_alpha")
                alpha = 0.0
            accel = Accelerator(accel.name, accel.kind, accel.clock_hz, float(alpha))
        return accel

    def build_platform(
        self,
        profile: AppProfile | str,
        storage: str | StorageTier = "hbm",
        *,
        link: str | NetworkLink | None = "ethernet",
        hosts: int = 1,
        hit_ratio: float = 0.0,
        mode: str | ExecutionMode = ExecutionMode.COLD,
        overlap: bool = False,
        clock_hz: int | None = None,
        storage_bandwidth: int | None = None,
        link_bandwidth: int | None = None,
        comm_volume_base_bytes: int | None = None,
    ) -> Platform:
        """Platform for running ``profile`` with calibrated constants attached.

        Multi-host platforms need a calibrated exchange volume (and, on
        GPUs, a calibrated alpha) unless one is passed explicitly.
        """
        if isinstance(profile, str):
            profile = self.get_profile(profile)
        accel = self.accelerator_for(profile, require_alpha=hosts > 1)
        if clock_hz is not None:
            accel = Accelerator(accel.name, accel.kind, int(clock_hz), accel.compute_scaling_alpha)
        tier = storage if isinstance(storage, StorageTier) else self.get_storage(storage)
        if storage_bandwidth is not None:
            tier = StorageTier(tier.name, int(storage_bandwidth))
        net = link if isinstance(link, NetworkLink) or link is None else self.get_link(link)
        if link_bandwidth is not None:
            if net is None:
                raise UsageError("link bandwidth override without a link")
            net = NetworkLink(net.name, int(link_bandwidth))
        volume = comm_volume_base_bytes
        if volume is None:
            volume = self.calibrated_comm_volume(profile.key)
            if volume is None:
                if hosts > 1:
                    raise MissingCalibrationError(
                        profile.accel_name, profile.app_name, "communication volume", "calibrate_comm_volume"
                    )
                volume = 0
        return Platform(
            accelerator=accel,
            storage=tier,
            cache=CacheModel(hit_ratio),
            cluster=Cluster(host_count=hosts, link=net, comm_volume_base_bytes=int(volume)),
            mode=ExecutionMode(mode),
            overlap=overlap,
        )


def _bandwidth_table(data: dict, origin: dict, cls) -> dict:
    out = {}
    for name, entry in data.items():
        if not isinstance(entry, dict) or not isinstance(entry.get("bandwidth_bytes_per_s"), int):
            raise ConfigError(f"{origin[name]}: {name}: bandwidth_bytes_per_s must be an integer")
        unknown = set(entry) - {"bandwidth_bytes_per_s", "nominal"}
        if unknown:
            raise ConfigError(f"{origin[name]}: {name}: unknown fields {sorted(unknown)}")
        try:
            out[name] = cls(name, entry["bandwidth_bytes_per_s"])
        except ConfigError as exc:
            raise ConfigError(f"{origin[name]}: {exc}") from None
    return out


def _build_profiles(data: dict, origin: dict, params: dict, accels: dict) -> dict[str, AppProfile]:
    out: dict[str, AppProfile] = {}
    pending = dict(data)
    # ratio profiles depend on their reference; resolve in dependency order
    while pending:
        progressed = False
        for key in list(pending):
            entry = pending[key]
            src = origin[key]
            if not isinstance(entry, dict):
                raise ConfigError(f"{src}: {key}: profile must be an object")
            unknown = set(entry) - _PROFILE_FIELDS
            if unknown:
                raise ConfigError(f"{src}: {key}: unknown fields {sorted(unknown)}")
            ratio = entry.get("io_volume_ratio")
            if ratio is not None and ratio.get("reference") not in out:
                if ratio.get("reference") not in pending:
                    raise ConfigError(f"{src}: {key}: unknown reference profile {ratio.get('reference')!r}")
                continue
            out[key] = _build_profile(key, entry, src, params, accels, out)
            del pending[key]
            progressed = True
        if not progressed:
            raise ConfigError(f"circular io_volume_ratio references among {sorted(pending)}")
    return out


def _build_profile(key, entry, src, params, accels, built) -> AppProfile:
    if key.count("/") != 1:
        raise ConfigError(f"{src}: profile key {key!r} must be 'accel/app'")
    accel_name, app_name = key.split("/")
    if accel_name not in accels:
        raise ConfigError(f"{src}: {key}: unknown accelerator {accel_name!r}")
    if entry.get("params") not in params:
        raise ConfigError(f"{src}: {key}: unknown params preset {entry.get('params')!r}")
    ratio = entry.get("io_volume_ratio")
    if ratio is not None:
        if "evk_bytes_per_cycle" in entry or "ct_bytes_per_cycle" in entry:
            raise ConfigError(f"{src}: {key}: give either io_volume_ratio or per-cycle rates, not both")
        evk_rate, ct_rate = ratio_rates(
            built[ratio["reference"]], float(ratio["ratio"]), float(entry["baseline_time_s"]),
            accels[accel_name].clock_hz, accels[ratio["reference"].split("/")[0]].clock_hz,
        )
    else:
        evk_rate = entry.get("evk_bytes_per_cycle")
        ct_rate = entry.get("ct_bytes_per_cycle")
        if evk_rate is None or ct_rate is None:
            raise ConfigError(f"{src}: {key}: evk_bytes_per_cycle and ct_bytes_per_cycle are required")
    try:
        return AppProfile(
            app_name=app_name,
            accel_name=accel_name,
            params=params[entry["params"]],
            baseline_time_s=float(entry["baseline_time_s"]),
            evk_bytes_per_cycle=float(evk_rate),
            ct_bytes_per_cycle=float(ct_rate),
            op_mix=entry["op_mix"],
            distinct_evk_count=int(entry["distinct_evk_count"]),
            evk_set_bytes=entry.get("evk_set_bytes"),
            iterations=int(entry.get("iterations", 1)),
        )
    except (KeyError, TypeError, UsageError) as exc:
        raise ConfigError(f"{src}: {key}: {exc}") from None


def ratio_rates(
    reference: AppProfile, ratio: float, baseline_time_s: float, clock_hz: int, reference_clock_hz: int
) -> tuple[float, float]:
    """Per-cycle rates whose run volume is ``ratio`` x the reference's.

    The evk/ciphertext split follows the reference profile's split.
    """
    ref_volume = reference.io_volume_bytes(reference_clock_hz)
    volume = ratio * ref_volume
    cycles = baseline_time_s * clock_hz
    total_rate = reference.total_bytes_per_cycle
    evk_share = reference.evk_bytes_per_cycle / total_rate if total_rate else 0.0
    return volume * evk_share / cycles, volume * (1.0 - evk_share) / cycles


@lru_cache(maxsize=8)
def _load(config_dir: str | None) -> Registry:
    raw = _raw_presets(config_dir)
    pdata, porigin = raw["params"]
    params = {}
    for name, entry in pdata.items():
        try:
            params[name] = CkksParams.from_dict(entry)
        except (UsageError, TypeError) as exc:
            raise ConfigError(f"{porigin[name]}: {name}: {exc}") from None
    adata, aorigin = raw["accelerators"]
    accels = {}
    for name, entry in adata.items():
        unknown = set(entry) - {"kind", "clock_hz"}
        if unknown:
            raise ConfigError(f"{aorigin[name]}: {name}: unknown fields {sorted(unknown)}")
        try:
            accels[name] = Accelerator(name, AcceleratorKind(entry["kind"]), int(entry["clock_hz"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{aorigin[name]}: {name}: {exc}") from None
    storage = _bandwidth_table(*raw["storage"], StorageTier)
    links = _bandwidth_table(*raw["links"], NetworkLink)
    profiles = _build_profiles(*raw["profiles"], params, accels)
    calibration = raw["calibration"][0]
    return Registry(
        params=params,
        accelerators=accels,
        storage=storage,
        links=links,
        profiles=profiles,
        calibration=calibration,
        origins={name: raw[name][1] for name in FILES},
    )


def load_registry(config_dir: str | os.PathLike | None = None) -> Registry:
    if config_dir is None:
        config_dir = os.environ.get(CONFIG_ENV) or None
    return _load(str(config_dir) if config_dir else None)


def get_params(name: str) -> CkksParams:
    return load_registry().get_params(name)


def get_accelerator(name: str) -> Accelerator:
    return load_registry().get_accelerator(name)


def get_storage(name: str) -> StorageTier:
    return load_registry().get_storage(name)


def get_link(name: str) -> NetworkLink:
    return load_registry().get_link(name)


def get_profile(key: str) -> AppProfile:
    return load_registry().get_profile(key)
