"""Line-oriented trace files.

Line 1 is a header object, every following line one record object, all
JSON. Byte and cycle counts are always integers; a float in an integer
field is rejected rather than truncated.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .errors import TraceIntegrityError, TraceParseError
from .workload import OpKind, OpRecord, Trace, TraceHeader

FORMAT_NAME = "fhe-iosim-trace"
FORMAT_VERSION = 1

_HEADER_FIELDS = (
    "app_name",
    "accel_name",
    "seed",
    "clock_hz",
    "iterations",
    "record_count",
    "total_cycles",
    "total_evk_bytes",
    "total_ct_bytes",
)
_RECORD_FIELDS = (
    "op_id",
    "kind",
    "compute_cycles",
    "ct_read_bytes",
    "ct_write_bytes",
    "evk_id",
    "evk_bytes",
    "rot_amount",
)
_INT_FIELDS = frozenset(
    {"clock_hz", "iterations", "record_count", "total_cycles", "total_evk_bytes", "total_ct_bytes",
     "op_id", "compute_cycles", "ct_read_bytes", "ct_write_bytes", "evk_bytes"}
)


def _dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True)


def header_to_dict(header: TraceHeader) -> dict:
    d = {"format": FORMAT_NAME, "version": FORMAT_VERSION}
    d.update({name: getattr(header, name) for name in _HEADER_FIELDS})
    return d


def record_to_dict(record: OpRecord) -> dict:
    d = {name: getattr(record, name) for name in _RECORD_FIELDS}
    d["kind"] = record.kind.value
    return d


def write_trace(trace: Trace, path: str | os.PathLike) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps(header_to_dict(trace.header)) + "\n")
        for record in trace.records:
            fh.write(_dumps(record_to_dict(record)) + "\n")


def _check_fields(obj: object, fields: tuple[str, ...], lineno: int, what: str) -> dict:
    if not isinstance(obj, dict):
        raise TraceParseError(f"{what} must be a JSON object", lineno)
    missing = [f for f in fields if f not in obj]
    if missing:
        raise TraceParseError(f"{what} is missing fields {missing}", lineno)
    extra = set(obj) - set(fields) - ({"format", "version"} if what == "header" else set())
    if extra:
        raise TraceParseError(f"{what} has unknown fields {sorted(extra)}", lineno)
    for name in fields:
        value = obj[name]
        if name in _INT_FIELDS and (isinstance(value, bool) or not isinstance(value, int)):
            raise TraceParseError(f"{what} field {name!r} must be an integer, got {value!r}", lineno)
    return obj


def read_trace(path: str | os.PathLike) -> Trace:
    path = Path(path)
    header = None
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise TraceParseError("blank line", lineno)
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceParseError(f"invalid JSON: {exc.msg}", lineno) from None
            if header is None:
                _check_fields(obj, _HEADER_FIELDS, lineno, "header")
                if obj.get("format") != FORMAT_NAME or obj.get("version") != FORMAT_VERSION:
                    raise TraceParseError(
                        f"not a {FORMAT_NAME} v{FORMAT_VERSION} file", lineno
                    )
                header = TraceHeader(**{name: obj[name] for name in _HEADER_FIELDS})
                continue
            _check_fields(obj, _RECORD_FIELDS, lineno, "record")
            try:
                kind = OpKind(obj["kind"])
            except ValueError:
                raise TraceParseError(f"unknown op kind {obj['kind']!r}", lineno) from None
            try:
                records.append(OpRecord(**{**obj, "kind": kind}))
            except TraceIntegrityError as exc:
                raise TraceParseError(str(exc), lineno) from None
    if header is None:
        raise TraceParseError("empty file: missing header", 1)
    return Trace(header, tuple(records))
