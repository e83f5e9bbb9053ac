"""Byte-size arithmetic for CKKS objects.

All sizes are exact integers in bytes. Binary units are used for byte
quantities (``MiB = 2**20``); bandwidths quoted in Gb/s are decimal bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParameterError, SizeError

KiB = 1 << 10
MiB = 1 << 20
GiB = 1 << 30
TiB = 1 << 40

# Sizes are written to trace files as signed 64-bit counters.
MAX_BYTES = (1 << 63) - 1


@dataclass(frozen=True)
class CkksParams:
    """Ring, modulus and key-switching parameters.

    ``aux_limbs_K`` is the number of auxiliary-modulus limbs (the special
    primes) carried by every evaluation-key polynomial.
    """

    ring_degree_N: int
    log_q_bits: int
    prime_bits: int
    word_bytes: int = 8
    dnum: int = 3
    aux_limbs_K: int = 2
    slot_count: int = field(init=False)

    def __post_init__(self) -> None:
        for name in ("ring_degree_N", "log_q_bits", "prime_bits", "word_bytes", "dnum"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.aux_limbs_K, bool) or not isinstance(self.aux_limbs_K, int) or self.aux_limbs_K < 0:
            raise ParameterError(f"aux_limbs_K must be a non-negative integer, got {self.aux_limbs_K!r}")
        n = self.ring_degree_N
        if n & (n - 1):
            raise ParameterError(f"ring_degree_N must be a power of two, got {n}")
        if n < 2:
            raise ParameterError("ring_degree_N must be at least 2")
        if self.prime_bits > 8 * self.word_bytes:
            raise ParameterError(
                f"prime_bits={self.prime_bits} does not fit a {self.word_bytes}-byte word"
            )
        object.__setattr__(self, "slot_count", n // 2)

    @classmethod
    def from_dict(cls, data: dict) -> "CkksParams":
        keys = ("ring_degree_N", "log_q_bits", "prime_bits", "word_bytes", "dnum", "aux_limbs_K")
        unknown = set(data) - set(keys)
        if unknown:
            raise ParameterError(f"unknown CKKS parameter fields: {sorted(unknown)}")
        return cls(**{k: data[k] for k in keys if k in data})

    def to_dict(self) -> dict:
        return {
            "ring_degree_N": self.ring_degree_N,
            "log_q_bits": self.log_q_bits,
            "prime_bits": self.prime_bits,
            "word_bytes": self.word_bytes,
            "dnum": self.dnum,
            "aux_limbs_K": self.aux_limbs_K,
        }


def _checked(nbytes: int) -> int:
    if nbytes > MAX_BYTES:
        raise SizeError(f"byte count {nbytes} overflows a 64-bit counter")
    return nbytes


def limb_count(params: CkksParams) -> int:
    """Number of residue polynomials (limbs) needed to cover the modulus."""
    return -(-params.log_q_bits // params.prime_bits)


def poly_bytes(params: CkksParams) -> int:
    return _checked(params.ring_degree_N * limb_count(params) * params.word_bytes)


def ciphertext_bytes(params: CkksParams) -> int:
    return _checked(2 * poly_bytes(params))


def evk_bytes(params: CkksParams) -> int:
    """Size of one evaluation key.

    A key is ``dnum`` ciphertexts, each over the extended modulus of
    ``L + K`` limbs.
    """
    limbs = limb_count(params) + params.aux_limbs_K
    return _checked(params.dnum * 2 * params.ring_degree_N * limbs * params.word_bytes)


def encode_fit(message_len_n: int, params: CkksParams) -> bool:
    """True when a length-``n`` message fits into the plaintext slots."""
    if message_len_n < 1:
        raise ParameterError(f"message length must be >= 1, got {message_len_n}")
    return params.slot_count >= message_len_n
