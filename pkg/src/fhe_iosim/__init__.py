"""Storage-I/O performance model for CKKS homomorphic-encryption accelerators."""

__version__ = "0.1.0"

from .engine import SimResult, baseline_time, required_hit_ratio, simulate, sweep
from .errors import FheIoSimError, ModelError, UsageError
from .platform import Accelerator, CacheModel, Cluster, NetworkLink, Platform, StorageTier
from .presets import load_registry
from .sizing import CkksParams, ciphertext_bytes, evk_bytes, limb_count, poly_bytes
from .trace_io import read_trace, write_trace
from .workload import AppProfile, OpKind, OpRecord, Trace, TraceHeader, generate_trace

__all__ = [
    "Accelerator", "AppProfile", "CacheModel", "CkksParams", "Cluster", "FheIoSimError",
    "ModelError", "NetworkLink", "OpKind", "OpRecord", "Platform", "SimResult", "StorageTier",
    "Trace", "TraceHeader", "UsageError", "baseline_time", "ciphertext_bytes", "evk_bytes",
    "generate_trace", "limb_count", "load_registry", "poly_bytes", "read_trace",
    "required_hit_ratio", "simulate", "sweep", "write_trace",
]
