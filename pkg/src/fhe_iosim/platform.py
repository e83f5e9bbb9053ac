"""Machine, storage, cache and cluster configuration.

The time model lives here as methods on :class:`Platform` so that the
engine (forward direction) and the calibration routines (inverse
direction) evaluate exactly the same terms:

* compute: ``T_c * (alpha + (1 - alpha) / n)``; ``alpha`` is 0 on ASICs
* I/O: ``(1 - hit_ratio) * V / B / n``
* communication: ``V_comm * (n - 1) / n / link_bandwidth``
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import TYPE_CHECKING

from .errors import CalibrationError, ConfigError, ParameterError
from .sizing import GiB, TiB

if TYPE_CHECKING:
    from .workload import AppProfile


def gib_per_s(value: float | str) -> int:
    """GiB/s -> integer bytes/s, exact for decimal inputs like ``"358.4"``."""
    return round(Fraction(str(value)) * GiB)


def tib_per_s(value: float | str) -> int:
    return round(Fraction(str(value)) * TiB)


def gbit_per_s(value: float | str) -> int:
    """Decimal gigabits/s -> integer bytes/s."""
    return round(Fraction(str(value)) * 10**9 / 8)


class AcceleratorKind(str, enum.Enum):
    ASIC = "ASIC"
    GPU = "GPU"


class ExecutionMode(str, enum.Enum):
    BASELINE = "baseline"
    COLD = "cold"


@dataclass(frozen=True)
class Accelerator:
    name: str
    kind: AcceleratorKind
    clock_hz: int
    compute_scaling_alpha: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AcceleratorKind(self.kind))
        if self.clock_hz <= 0:
            raise ConfigError(f"accelerator {self.name}: clock_hz must be positive")
        if not 0.0 <= self.compute_scaling_alpha <= 1.0:
            raise ConfigError(f"accelerator {self.name}: alpha must lie in [0, 1]")
        if self.kind is AcceleratorKind.ASIC and self.compute_scaling_alpha != 0.0:
            raise ConfigError(f"accelerator {self.name}: ASIC compute scales perfectly (alpha = 0)")


@dataclass(frozen=True)
class StorageTier:
    name: str
    bandwidth_bytes_per_s: int

    def __post_init__(self) -> None:
        if not self.bandwidth_bytes_per_s > 0:
            raise ConfigError(f"storage tier {self.name}: bandwidth must be positive")


@dataclass(frozen=True)
class CacheModel:
    hit_ratio: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.hit_ratio <= 1.0:
            raise ConfigError(f"hit_ratio must lie in [0, 1], got {self.hit_ratio}")


@dataclass(frozen=True)
class NetworkLink:
    name: str
    bandwidth_bytes_per_s: int

    def __post_init__(self) -> None:
        if not self.bandwidth_bytes_per_s > 0:
            raise ConfigError(f"link {self.name}: bandwidth must be positive")


@dataclass(frozen=True)
class Cluster:
    """Star topology behind one non-blocking switch.

    Each host's access link is the bottleneck, so the exchange volume a
    host receives is divided by that link's bandwidth alone.
    """

    host_count: int = 1
    link: NetworkLink | None = None
    comm_volume_base_bytes: int = 0
    switch_nonblocking: bool = True
    topology: str = field(default="star", init=False)

    def __post_init__(self) -> None:
        if isinstance(self.host_count, bool) or not isinstance(self.host_count, int) or self.host_count < 1:
            raise ConfigError(f"host_count must be a positive integer, got {self.host_count!r}")
        if self.comm_volume_base_bytes < 0:
            raise ConfigError("comm_volume_base_bytes must be non-negative")
        if self.host_count > 1 and self.link is None:
            raise ConfigError("a multi-host cluster needs a network link")
        if not self.switch_nonblocking:
            raise ConfigError("only a non-blocking switch is modelled")


@dataclass(frozen=True)
class Platform:
    accelerator: Accelerator
    storage: StorageTier
    cache: CacheModel = CacheModel()
    cluster: Cluster = Cluster()
    mode: ExecutionMode = ExecutionMode.COLD
    overlap: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", ExecutionMode(self.mode))

    @property
    def hosts(self) -> int:
        return self.cluster.host_count

    def with_(self, **changes) -> "Platform":
        """Copy with top-level or nested overrides.

        Accepts ``hit_ratio``, ``hosts``, ``link``, ``storage``, ``mode``,
        ``overlap``, ``accelerator``, ``comm_volume_base_bytes``.
        """
        platform = self
        cluster_changes = {}
        if "hit_ratio" in changes:
            platform = replace(platform, cache=CacheModel(changes.pop("hit_ratio")))
        if "hosts" in changes:
            cluster_changes["host_count"] = changes.pop("hosts")
        if "link" in changes:
            cluster_changes["link"] = changes.pop("link")
        if "comm_volume_base_bytes" in changes:
            cluster_changes["comm_volume_base_bytes"] = changes.pop("comm_volume_base_bytes")
        if cluster_changes:
            platform = replace(platform, cluster=replace(platform.cluster, **cluster_changes))
        return replace(platform, **changes) if changes else platform

    def compute_scale(self) -> float:
        """Fraction of single-host compute time left on each of n hosts."""
        n = self.hosts
        alpha = self.accelerator.compute_scaling_alpha
        if n == 1:
            return 1.0
        return alpha + (1.0 - alpha) / n

    def compute_time(self, cycles: int | float) -> float:
        return cycles / self.accelerator.clock_hz * self.compute_scale()

    def io_bytes(self, demand_bytes: int | float) -> float:
        """Bytes actually fetched from storage across all hosts."""
        if self.mode is ExecutionMode.BASELINE:
            return 0.0
        return (1.0 - self.cache.hit_ratio) * demand_bytes

    def io_time(self, demand_bytes: int | float) -> float:
        return self.io_bytes(demand_bytes) / self.storage.bandwidth_bytes_per_s / self.hosts

    def comm_factor(self) -> float:
        n = self.hosts
        return (n - 1) / n

    def comm_time(self, has_key_ops: bool = True) -> float:
        if self.hosts == 1 or not has_key_ops or self.cluster.comm_volume_base_bytes == 0:
            return 0.0
        link = self.cluster.link
        return self.cluster.comm_volume_base_bytes * self.comm_factor() / link.bandwidth_bytes_per_s

    def describe(self) -> dict:
        link = self.cluster.link
        return {
            "accel": self.accelerator.name,
            "accel_kind": self.accelerator.kind.value,
            "clock_hz": self.accelerator.clock_hz,
            "alpha": self.accelerator.compute_scaling_alpha,
            "storage": self.storage.name,
            "storage_bandwidth_bytes_per_s": self.storage.bandwidth_bytes_per_s,
            "hit_ratio": self.cache.hit_ratio,
            "hosts": self.hosts,
            "link": link.name if link else None,
            "link_bandwidth_bytes_per_s": link.bandwidth_bytes_per_s if link else None,
            "comm_volume_base_bytes": self.cluster.comm_volume_base_bytes,
            "mode": self.mode.value,
            "overlap": self.overlap,
        }


@dataclass(frozen=True)
class Breakdown:
    """Observed time fractions at ``host_count`` hosts."""

    compute: float
    io: float
    comm: float
    host_count: int

    def validate(self, tol: float = 1e-6) -> None:
        parts = (self.compute, self.io, self.comm)
        if any(p < 0 or p > 1 or math.isnan(p) for p in parts):
            raise CalibrationError(f"breakdown fractions must lie in [0, 1], got {parts}")
        if abs(sum(parts) - 1.0) > tol:
            raise CalibrationError(f"breakdown fractions must sum to 1, got {sum(parts)!r}")


def calibrate_io_volume(bytes_per_cycle: float, baseline_time_s: float, clock_hz: float) -> float:
    """Off-chip volume implied by an average per-cycle demand."""
    if bytes_per_cycle < 0 or baseline_time_s < 0 or clock_hz < 0:
        raise ParameterError("calibrate_io_volume inputs must be non-negative")
    return bytes_per_cycle * baseline_time_s * clock_hz


def calibrate_comm_volume(breakdown: Breakdown, platform: Platform, profile: "AppProfile") -> int:
    """Exchange volume reproducing ``breakdown`` at its host count.

    The compute term on ``n`` hosts is known analytically, so the total
    time follows from the compute fraction and the communication time
    from the comm fraction; dividing by ``(n - 1) / n`` and multiplying
    by the link bandwidth gives the per-host base volume.
    """
    n = breakdown.host_count
    if n < 2:
        raise ParameterError("calibrating communication needs at least two hosts")
    breakdown.validate()
    if breakdown.compute <= 0:
        raise CalibrationError("compute fraction must be positive")
    if platform.cluster.link is None:
        raise ConfigError("platform has no network link")
    at_n = platform.with_(hosts=n)
    compute_s = at_n.compute_time(profile.baseline_time_s * at_n.accelerator.clock_hz)
    total_s = compute_s / breakdown.compute
    comm_s = breakdown.comm * total_s
    volume = comm_s * at_n.cluster.link.bandwidth_bytes_per_s / at_n.comm_factor()
    if volume < 0:
        raise CalibrationError(f"breakdown implies a negative exchange volume ({volume})")
    return round(volume)


def calibrate_gpu_alpha(
    breakdown: Breakdown,
    baseline_time_s: float,
    single_host_io_s: float,
    tol: float = 1e-9,
) -> float:
    """Non-scalable compute fraction reproducing ``breakdown``.

    I/O splits perfectly across hosts, so the total time at ``n`` hosts is
    the I/O term over its fraction; the compute fraction then fixes
    ``alpha + (1 - alpha) / n``.
    """
    n = breakdown.host_count
    if n < 2:
        raise ParameterError("calibrating alpha needs at least two hosts")
    breakdown.validate()
    if breakdown.io <= 0 or single_host_io_s <= 0:
        raise CalibrationError("alpha calibration needs a non-zero I/O term")
    if baseline_time_s <= 0:
        raise ParameterError("baseline_time_s must be positive")
    total_s = single_host_io_s / n / breakdown.io
    scale = breakdown.compute * total_s / baseline_time_s
    alpha = (scale - 1.0 / n) / (1.0 - 1.0 / n)
    if alpha < -tol or alpha > 1.0 + tol:
        raise CalibrationError(f"no alpha in [0, 1] reproduces the breakdown (solution {alpha:.6g})")
    return min(1.0, max(0.0, alpha))
