"""Operation traces and synthetic trace generation.

A trace is an ordered list of primitive CKKS operations, each annotated
with device cycles and the bytes it moves off-chip. Generated traces are
synthetic: they are built so that their aggregates (total cycles, bytes
per cycle, operation mix, distinct evaluation keys) match a calibrated
:class:`AppProfile`. Each record stands for a contiguous chunk of the real
operation stream, so byte counts are apportioned rather than being the
literal size of one ciphertext or key.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import InconsistentProfileError, ParameterError, TraceIntegrityError
from .sizing import CkksParams, evk_bytes as evk_key_bytes, limb_count

MIN_OPS = 10
DEFAULT_OPS = 10_000


class OpKind(str, enum.Enum):
    PADD = "PAdd"
    HADD = "HAdd"
    PMULT = "PMult"
    HMULT = "HMult"
    HROT = "HRot"

    @property
    def uses_key(self) -> bool:
        return self in (OpKind.HMULT, OpKind.HROT)

    @classmethod
    def parse(cls, value: "str | OpKind") -> "OpKind":
        if isinstance(value, OpKind):
            return value
        try:
            return cls(value)
        except ValueError:
            known = ", ".join(k.value for k in cls)
            raise ParameterError(f"unknown op kind {value!r}; expected one of {known}") from None


KEY_KINDS = frozenset(k for k in OpKind if k.uses_key)

# Operand footprint in ciphertext units; a plaintext is one polynomial,
# i.e. half a ciphertext.
_READ_UNITS = {
    OpKind.PADD: 1.5,
    OpKind.HADD: 2.0,
    OpKind.PMULT: 1.5,
    OpKind.HMULT: 2.0,
    OpKind.HROT: 1.0,
}
_WRITE_UNITS = {kind: 1.0 for kind in OpKind}

MULT_KEY_ID = "mult"


def rot_key_id(rot_amount: int) -> str:
    return f"rot{rot_amount}"


@dataclass(frozen=True)
class OpRecord:
    op_id: int
    kind: OpKind
    compute_cycles: int
    ct_read_bytes: int
    ct_write_bytes: int
    evk_id: str | None = None
    evk_bytes: int = 0
    rot_amount: int | None = None

    def __post_init__(self) -> None:
        kind = OpKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        for name in ("op_id", "compute_cycles", "ct_read_bytes", "ct_write_bytes", "evk_bytes"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise TraceIntegrityError(f"op {self.op_id}: {name} must be a non-negative integer")
        if kind.uses_key:
            if self.evk_id is None or self.evk_bytes <= 0:
                raise TraceIntegrityError(f"op {self.op_id}: {kind.value} needs an evk_id and evk_bytes > 0")
        elif self.evk_id is not None or self.evk_bytes:
            raise TraceIntegrityError(f"op {self.op_id}: {kind.value} must not reference an evaluation key")
        if (kind is OpKind.HROT) != (self.rot_amount is not None):
            raise TraceIntegrityError(f"op {self.op_id}: rot_amount is present iff kind is HRot")

    @property
    def ct_bytes(self) -> int:
        return self.ct_read_bytes + self.ct_write_bytes

    @property
    def total_bytes(self) -> int:
        return self.ct_read_bytes + self.ct_write_bytes + self.evk_bytes


@dataclass(frozen=True)
class AppProfile:
    """Aggregate description of one application on one accelerator."""

    app_name: str
    accel_name: str
    params: CkksParams
    baseline_time_s: float
    evk_bytes_per_cycle: float
    ct_bytes_per_cycle: float
    op_mix: Mapping[OpKind, float]
    distinct_evk_count: int
    evk_set_bytes: int | None = None
    iterations: int = 1

    def __post_init__(self) -> None:
        mix = {OpKind.parse(k): float(v) for k, v in self.op_mix.items()}
        for kind in OpKind:
            mix.setdefault(kind, 0.0)
        mix = {kind: mix[kind] for kind in OpKind}
        if any(not 0.0 <= v <= 1.0 for v in mix.values()):
            raise ParameterError(f"{self.key}: op_mix fractions must lie in [0, 1]")
        if abs(sum(mix.values()) - 1.0) > 1e-9:
            raise ParameterError(f"{self.key}: op_mix must sum to 1, got {sum(mix.values())!r}")
        object.__setattr__(self, "op_mix", mix)
        if self.baseline_time_s <= 0:
            raise ParameterError(f"{self.key}: baseline_time_s must be positive")
        if self.evk_bytes_per_cycle < 0 or self.ct_bytes_per_cycle < 0:
            raise ParameterError(f"{self.key}: byte rates must be non-negative")
        if self.iterations < 1:
            raise ParameterError(f"{self.key}: iterations must be >= 1")
        uses_keys = any(mix[k] > 0 for k in KEY_KINDS)
        if uses_keys and self.distinct_evk_count < 1:
            raise ParameterError(f"{self.key}: key-consuming op mix needs distinct_evk_count >= 1")
        if not uses_keys and self.distinct_evk_count != 0:
            raise ParameterError(f"{self.key}: op mix without HMult/HRot must have distinct_evk_count = 0")
        if self.evk_set_bytes is None:
            object.__setattr__(self, "evk_set_bytes", self.distinct_evk_count * evk_key_bytes(self.params))
        elif self.evk_set_bytes < self.distinct_evk_count:
            raise ParameterError(f"{self.key}: evk_set_bytes smaller than the key count")

    @property
    def key(self) -> str:
        return f"{self.accel_name}/{self.app_name}"

    @property
    def total_bytes_per_cycle(self) -> float:
        return self.evk_bytes_per_cycle + self.ct_bytes_per_cycle

    def io_volume_bytes(self, clock_hz: float) -> float:
        """Off-chip demand of one run at ``clock_hz``."""
        return self.total_bytes_per_cycle * self.baseline_time_s * clock_hz


@dataclass(frozen=True)
class TraceHeader:
    app_name: str
    accel_name: str
    seed: int | None
    clock_hz: int
    total_cycles: int
    total_evk_bytes: int
    total_ct_bytes: int
    record_count: int
    iterations: int = 1


@dataclass(frozen=True)
class Trace:
    header: TraceHeader
    records: tuple[OpRecord, ...] = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        h = self.header
        sums = _sums(self.records)
        expected = (h.total_cycles, h.total_evk_bytes, h.total_ct_bytes, h.record_count)
        if sums != expected:
            raise TraceIntegrityError(
                "header totals (cycles, evk bytes, ct bytes, records) = "
                f"{expected} do not match record sums {sums}"
            )
        if h.clock_hz <= 0:
            raise TraceIntegrityError("clock_hz must be positive")
        if h.iterations < 1:
            raise TraceIntegrityError("iterations must be >= 1")

    @classmethod
    def from_records(
        cls,
        records: Iterable[OpRecord],
        *,
        app_name: str,
        accel_name: str,
        clock_hz: int,
        seed: int | None = None,
        iterations: int = 1,
    ) -> "Trace":
        records = tuple(records)
        cycles, evk, ct, count = _sums(records)
        header = TraceHeader(
            app_name=app_name,
            accel_name=accel_name,
            seed=seed,
            clock_hz=clock_hz,
            total_cycles=cycles,
            total_evk_bytes=evk,
            total_ct_bytes=ct,
            record_count=count,
            iterations=iterations,
        )
        return cls(header, records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def total_bytes(self) -> int:
        return self.header.total_evk_bytes + self.header.total_ct_bytes

    @property
    def has_key_ops(self) -> bool:
        return any(r.kind.uses_key for r in self.records)


def _sums(records: Sequence[OpRecord]) -> tuple[int, int, int, int]:
    cycles = evk = ct = 0
    for r in records:
        cycles += r.compute_cycles
        evk += r.evk_bytes
        ct += r.ct_read_bytes + r.ct_write_bytes
    return cycles, evk, ct, len(records)


def per_op_cycle_weights(params: CkksParams) -> dict[OpKind, int]:
    """Relative compute cost of each primitive.

    Additions and plaintext multiplications are limb-wise passes,
    ``O(N*L)``. Key-switching kinds add ``dnum`` NTT-dominated passes,
    ``O(dnum * N * L * log N)``.
    """
    linear = params.ring_degree_N * limb_count(params)
    log_n = params.ring_degree_N.bit_length() - 1
    keyed = params.dnum * linear * log_n
    return {
        OpKind.PADD: linear,
        OpKind.HADD: linear,
        OpKind.PMULT: linear,
        OpKind.HMULT: keyed,
        OpKind.HROT: keyed,
    }


def apportion(total: int, weights: Sequence[float], minimum: int = 0) -> list[int]:
    """Split ``total`` into integers proportional to ``weights``.

    Largest-remainder rounding, ties broken by position, so the result
    sums to ``total`` exactly and is deterministic. Each share is at least
    ``minimum`` (requires ``total >= minimum * len(weights)``).
    """
    n = len(weights)
    if n == 0:
        if total:
            raise ValueError("cannot apportion a non-zero total over no weights")
        return []
    base = minimum * n
    if total < base:
        raise ValueError(f"total {total} below the minimum {minimum} x {n}")
    rest = total - base
    wsum = float(sum(weights))
    if wsum <= 0:
        if rest:
            raise ValueError("weights sum to zero")
        return [minimum] * n
    raw = [rest * w / wsum for w in weights]
    shares = [int(x) for x in raw]
    short = rest - sum(shares)
    order = sorted(range(n), key=lambda i: (-(raw[i] - shares[i]), i))
    for i in order[:short]:
        shares[i] += 1
    # float rounding in raw can leave us over by a unit; take it back from the largest
    while sum(shares) > rest:
        j = max(range(n), key=lambda i: shares[i])
        shares[j] -= 1
    return [s + minimum for s in shares]


def generate_trace(
    profile: AppProfile,
    target_op_count: int = DEFAULT_OPS,
    seed: int = 0,
    clock_hz: int | None = None,
) -> Trace:
    """Build a synthetic trace matching ``profile``'s aggregates.

    The trace covers one iteration of the application; the profile's
    iteration count is recorded only as metadata (see
    :func:`repeat_iterations` for a materialised multi-iteration run).
    """
    if isinstance(target_op_count, bool) or not isinstance(target_op_count, int) or target_op_count < MIN_OPS:
        raise ParameterError(f"target_op_count must be an integer >= {MIN_OPS}, got {target_op_count!r}")
    if clock_hz is None:
        from .presets import get_accelerator

        clock_hz = get_accelerator(profile.accel_name).clock_hz
    mix = profile.op_mix
    key_fraction = sum(mix[k] for k in KEY_KINDS)
    if key_fraction == 0 and profile.evk_bytes_per_cycle > 0:
        raise InconsistentProfileError(
            f"{profile.key}: evk_bytes_per_cycle > 0 but the op mix has no HMult/HRot"
        )
    if key_fraction > 0 and profile.evk_bytes_per_cycle == 0:
        raise InconsistentProfileError(
            f"{profile.key}: HMult/HRot ops present but evk_bytes_per_cycle is 0"
        )

    rng = random.Random(seed)
    counts = dict(zip(OpKind, apportion(target_op_count, [mix[k] for k in OpKind])))
    n_mult_keys = 1 if counts[OpKind.HMULT] else 0
    n_rot_keys = profile.distinct_evk_count - n_mult_keys if key_fraction else 0
    if counts[OpKind.HROT] and n_rot_keys < 1:
        raise InconsistentProfileError(f"{profile.key}: HRot ops need at least one rotation key")
    if n_rot_keys and counts[OpKind.HROT] < n_rot_keys:
        raise ParameterError(
            f"{profile.key}: {counts[OpKind.HROT]} HRot records cannot cover "
            f"{n_rot_keys} rotation keys; raise target_op_count"
        )
    if n_rot_keys > profile.params.slot_count - 1:
        raise InconsistentProfileError(f"{profile.key}: more rotation keys than slot positions")

    kinds = [kind for kind in OpKind for _ in range(counts[kind])]
    rng.shuffle(kinds)

    rot_amounts = sorted(rng.sample(range(1, profile.params.slot_count), n_rot_keys)) if n_rot_keys else []
    first_use = list(rot_amounts)
    rng.shuffle(first_use)
    rot_for: dict[int, int] = {}
    hrot_positions = [i for i, k in enumerate(kinds) if k is OpKind.HROT]
    for j, pos in enumerate(hrot_positions):
        rot_for[pos] = first_use[j] if j < len(first_use) else rng.choice(rot_amounts)

    kind_weight = per_op_cycle_weights(profile.params)
    cycle_weights = [kind_weight[k] * rng.uniform(0.75, 1.25) for k in kinds]
    total_cycles = round(profile.baseline_time_s * clock_hz)
    cycles = apportion(total_cycles, cycle_weights)

    key_positions = [i for i, k in enumerate(kinds) if k.uses_key]
    total_evk = round(profile.evk_bytes_per_cycle * total_cycles)
    if key_positions and total_evk < len(key_positions):
        raise InconsistentProfileError(f"{profile.key}: evk traffic too small to give every key op one byte")
    evk_share = apportion(total_evk, [cycles[i] for i in key_positions], minimum=1 if key_positions else 0)
    evk_for = dict(zip(key_positions, evk_share))

    total_ct = round(profile.ct_bytes_per_cycle * total_cycles)
    ct_share = apportion(total_ct, [_READ_UNITS[k] + _WRITE_UNITS[k] for k in kinds])

    records = []
    for i, kind in enumerate(kinds):
        ct = ct_share[i]
        read = round(ct * _READ_UNITS[kind] / (_READ_UNITS[kind] + _WRITE_UNITS[kind]))
        if kind is OpKind.HROT:
            evk_id, rot = rot_key_id(rot_for[i]), rot_for[i]
        elif kind is OpKind.HMULT:
            evk_id, rot = MULT_KEY_ID, None
        else:
            evk_id, rot = None, None
        records.append(
            OpRecord(
                op_id=i,
                kind=kind,
                compute_cycles=cycles[i],
                ct_read_bytes=read,
                ct_write_bytes=ct - read,
                evk_id=evk_id,
                evk_bytes=evk_for.get(i, 0),
                rot_amount=rot,
            )
        )
    return Trace.from_records(
        records,
        app_name=profile.app_name,
        accel_name=profile.accel_name,
        clock_hz=int(clock_hz),
        seed=seed,
    )


def repeat_iterations(trace: Trace, times: int) -> Trace:
    """Concatenate ``times`` copies of ``trace`` with renumbered op ids."""
    if times < 1:
        raise ParameterError("times must be >= 1")
    n = len(trace)
    records = [
        OpRecord(
            op_id=rep * n + r.op_id,
            kind=r.kind,
            compute_cycles=r.compute_cycles,
            ct_read_bytes=r.ct_read_bytes,
            ct_write_bytes=r.ct_write_bytes,
            evk_id=r.evk_id,
            evk_bytes=r.evk_bytes,
            rot_amount=r.rot_amount,
        )
        for rep in range(times)
        for r in trace.records
    ]
    h = trace.header
    return Trace.from_records(
        records,
        app_name=h.app_name,
        accel_name=h.accel_name,
        clock_hz=h.clock_hz,
        seed=h.seed,
        iterations=h.iterations * times,
    )


@dataclass(frozen=True)
class TraceSummary:
    """Aggregates recomputed from records (the inverse of generation)."""

    app_name: str
    accel_name: str
    clock_hz: int
    iterations: int
    record_count: int
    total_cycles: int
    baseline_time_s: float
    evk_bytes_per_cycle: float
    ct_bytes_per_cycle: float
    op_mix: dict[OpKind, float]
    distinct_evk_count: int
    total_evk_bytes: int
    total_ct_bytes: int
    total_io_bytes: int

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["op_mix"] = {k.value: v for k, v in self.op_mix.items()}
        return d


def trace_summary(trace: Trace) -> TraceSummary:
    """Per-iteration aggregates of ``trace``."""
    cycles = evk = ct = 0
    counts = {kind: 0 for kind in OpKind}
    keys = set()
    for r in trace.records:
        cycles += r.compute_cycles
        evk += r.evk_bytes
        ct += r.ct_read_bytes + r.ct_write_bytes
        counts[r.kind] += 1
        if r.evk_id is not None:
            keys.add(r.evk_id)
    n = len(trace.records)
    h = trace.header
    return TraceSummary(
        app_name=h.app_name,
        accel_name=h.accel_name,
        clock_hz=h.clock_hz,
        iterations=h.iterations,
        record_count=n,
        total_cycles=cycles,
        baseline_time_s=cycles / h.clock_hz / h.iterations,
        evk_bytes_per_cycle=evk / cycles if cycles else 0.0,
        ct_bytes_per_cycle=ct / cycles if cycles else 0.0,
        op_mix={k: (c / n if n else 0.0) for k, c in counts.items()},
        distinct_evk_count=len(keys),
        total_evk_bytes=evk,
        total_ct_bytes=ct,
        total_io_bytes=evk + ct,
    )
