"""Exception hierarchy.

Errors split into two families so the CLI can map them onto exit codes:
``UsageError`` (bad input from the caller, exit 2) and ``ModelError``
(the model was asked something it cannot answer, exit 1).
"""

from __future__ import annotations


class FheIoSimError(Exception):
    """Base class for every error raised by this package."""


class UsageError(FheIoSimError):
    pass


class ModelError(FheIoSimError):
    pass


class ParameterError(UsageError, ValueError):
    """Invalid CKKS parameters or a violated precondition."""


class PresetNotFoundError(UsageError, KeyError):
    def __init__(self, kind: str, name: str, known: list[str]):
        self.kind = kind
        self.name = name
        self.known = sorted(known)
        super().__init__(f"unknown {kind} preset {name!r}; known: {', '.join(self.known)}")

    def __str__(self) -> str:  # KeyError would repr() the message
        return self.args[0]


class ConfigError(UsageError, ValueError):
    """Malformed or invalid configuration (bad schema, zero bandwidth...)."""


class SizeError(ModelError, OverflowError):
    pass


class InconsistentProfileError(ModelError, ValueError):
    pass


class TraceParseError(ModelError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class TraceIntegrityError(ModelError, ValueError):
    pass


class ConsistencyError(ModelError, ValueError):
    pass


class CalibrationError(ModelError, ValueError):
    pass


class InfeasibleError(ModelError, ValueError):
    """No hit ratio in [0, 1] meets the requested performance budget."""

    def __init__(self, message: str, compute_time_s: float, budget_s: float):
        self.compute_time_s = compute_time_s
        self.budget_s = budget_s
        super().__init__(message)


class MissingCalibrationError(ModelError, LookupError):
    def __init__(self, accel: str, app: str, what: str, op: str):
        self.accel = accel
        self.app = app
        super().__init__(
            f"no calibrated {what} for {accel}/{app}; run `fhe-iosim calibrate` "
            f"(or call {op}) and place the result in the config directory"
        )
