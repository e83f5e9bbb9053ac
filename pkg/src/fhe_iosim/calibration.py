"""Fitting the model's free constants to published measurements.

Three kinds of constant are fitted, in this order:

1. the Sharp ResNet-20 exchange volume, inverted exactly from the 32-host
   PCIe/Ethernet time breakdown;
2. the GPU non-scalable compute fraction and the TensorFHE ResNet-20
   exchange volume, inverted exactly from the GPU 32-host breakdown;
3. the HELR exchange volumes, for which no breakdown is published. Each is
   a one-parameter least-squares fit (in log space) of the app-averaged
   32-host scaling factors, with the ResNet-20 volume held at step 1/2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from scipy.optimize import minimize_scalar

from . import targets as T
from .engine import simulate_profile
from .platform import Accelerator, Breakdown, Platform, calibrate_comm_volume, calibrate_gpu_alpha
from .presets import Registry, load_registry

# Search window for fitted exchange volumes, bytes.
_FIT_BOUNDS = (1e6, 1e15)


def _platform(
    reg: Registry,
    key: str,
    storage: str,
    link: str,
    hosts: int,
    alpha: float | None = None,
    volume: int | None = None,
) -> Platform:
    profile = reg.get_profile(key)
    p = reg.build_platform(profile, storage, link=link, hosts=1, comm_volume_base_bytes=volume or 0)
    changes = {"hosts": hosts}
    if alpha is not None:
        a = p.accelerator
        changes["accelerator"] = Accelerator(a.name, a.kind, a.clock_hz, alpha)
    return p.with_(**changes)


def speedup(reg: Registry, key: str, storage: str, link: str, hosts: int, alpha: float | None, volume: int) -> float:
    profile = reg.get_profile(key)
    one = simulate_profile(profile, _platform(reg, key, storage, link, 1, alpha, volume))
    many = simulate_profile(profile, _platform(reg, key, storage, link, hosts, alpha, volume))
    return one.total_time_s / many.total_time_s


def mean_speedup(
    reg: Registry,
    keys: Sequence[str],
    storages: Sequence[str],
    link: str,
    volumes: dict[str, float],
    alpha: float | None = None,
    hosts: int = T.MAX_HOSTS,
) -> float:
    values = [
        speedup(reg, k, s, link, hosts, alpha, volumes[k])
        for k in keys
        for s in storages
    ]
    return sum(values) / len(values)


@dataclass(frozen=True)
class FitTarget:
    storages: tuple[str, ...]
    link: str
    speedup: float


def fit_comm_volume(
    reg: Registry,
    key: str,
    fixed: dict[str, float],
    fit_targets: Iterable[FitTarget],
    alpha: float | None = None,
) -> int:
    """Exchange volume for ``key`` best matching app-averaged speedups.

    ``fixed`` holds the already-calibrated volumes of the other
    applications averaged together with ``key``.
    """
    fit_targets = list(fit_targets)
    keys = sorted(set(fixed) | {key})

    def loss(log_v: float) -> float:
        volumes = {**fixed, key: math.exp(log_v)}
        err = 0.0
        for t in fit_targets:
            pred = mean_speedup(reg, keys, t.storages, t.link, volumes, alpha)
            err += math.log(pred / t.speedup) ** 2
        return err

    lo, hi = (math.log(b) for b in _FIT_BOUNDS)
    res = minimize_scalar(loss, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return round(math.exp(res.x))


def calibrate_all(reg: Registry | None = None) -> dict:
    """Recompute every calibration constant from the published targets."""
    reg = reg or load_registry()
    storage, link = T.BREAKDOWN_STORAGE, T.BREAKDOWN_LINK

    sharp_resnet = reg.get_profile("sharp/resnet20")
    c, i, m = T.SHARP_BREAKDOWN[32]
    sharp_resnet_volume = calibrate_comm_volume(
        Breakdown(c, i, m, 32), _platform(reg, "sharp/resnet20", storage, link, 1), sharp_resnet
    )

    gpu_resnet = reg.get_profile("tensorfhe/resnet20")
    c, i, m = T.GPU_BREAKDOWN[32]
    single = simulate_profile(gpu_resnet, _platform(reg, "tensorfhe/resnet20", storage, link, 1))
    alpha = calibrate_gpu_alpha(Breakdown(c, i, m, 32), gpu_resnet.baseline_time_s, single.io_time_s)
    gpu_resnet_volume = calibrate_comm_volume(
        Breakdown(c, i, m, 32), _platform(reg, "tensorfhe/resnet20", storage, link, 1, alpha), gpu_resnet
    )

    sharp_targets = [
        FitTarget((tier,), ln, T.speedup_target(entry))
        for ln, per_tier in T.SHARP_SCALING.items()
        for tier, entry in per_tier.items()
    ]
    sharp_helr_volume = fit_comm_volume(
        reg, "sharp/helr", {"sharp/resnet20": sharp_resnet_volume}, sharp_targets
    )
    gpu_targets = [FitTarget(T.STORAGE_TIERS, ln, v) for ln, v in T.GPU_SCALING.items()]
    gpu_helr_volume = fit_comm_volume(
        reg, "tensorfhe/helr", {"tensorfhe/resnet20": gpu_resnet_volume}, gpu_targets, alpha
    )

    return {
        "compute_scaling_alpha": {"tensorfhe": alpha},
        "comm_volume_base_bytes": {
            "sharp/resnet20": sharp_resnet_volume,
            "sharp/helr": sharp_helr_volume,
            "tensorfhe/resnet20": gpu_resnet_volume,
            "tensorfhe/helr": gpu_helr_volume,
        },
        "notes": {
            "sharp/resnet20": "exact inversion of the 32-host PCIe/Ethernet breakdown",
            "tensorfhe/resnet20": "exact inversion of the GPU 32-host breakdown (with alpha)",
            "tensorfhe": "alpha from the GPU 32-host breakdown",
            "sharp/helr": "log least squares on 8 app-averaged 32-host scaling factors",
            "tensorfhe/helr": "log least squares on the 2 app/storage-averaged 32-host speedups",
        },
    }


def write_calibration(cal: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cal, indent=2, sort_keys=True) + "\n", encoding="utf-8")
