"""Bit keys and XOR realised as plaintext-slot addition.

One key bit occupies one polynomial coefficient.  Homomorphic XOR is plain
ciphertext addition, so intermediate coefficients grow in GF(p); the mod-2
reduction and truncation to the key length happen only in :func:`decode`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import audit
from .errors import CapacityError
from .fhe import Ciphertext, Plaintext, RingParams, hadd

ORIGINS = ("qrng", "qkd-link", "recovered")


@dataclass(frozen=True)
class BitKey:
    bits: tuple[int, ...]
    origin: str = "qrng"

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("bit keys hold only 0/1")
        if len(bits) < 1:
            raise ValueError("empty bit key")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown key origin {self.origin!r}")
        object.__setattr__(self, "bits", bits)
        audit.notify_bitkey(self.origin)

    @property
    def length(self) -> int:
        return len(self.bits)

    @classmethod
    def from_bytes(cls, data: bytes, length: int | None = None, origin: str = "qrng") -> BitKey:
        """MSB of the first byte is bit 0."""
        bits = np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))
        if length is not None:
            if length > len(bits):
                raise ValueError(f"{len(data)} bytes cannot hold {length} bits")
            bits = bits[:length]
        return cls(tuple(int(b) for b in bits), origin)

    @classmethod
    def from_hex(cls, text: str, length: int | None = None, origin: str = "qrng") -> BitKey:
        return cls.from_bytes(bytes.fromhex(text), length, origin)

    @classmethod
    def from_string(cls, text: str, origin: str = "qrng") -> BitKey:
        """Parse a bit string such as ``"1011"`` (spaces ignored)."""
        return cls(tuple(int(c) for c in text if not c.isspace()), origin)

    def to_bytes(self) -> bytes:
        return np.packbits(np.array(self.bits, dtype=np.uint8)).tobytes()

    def hex(self) -> str:
        return self.to_bytes().hex()

    def bitstring(self) -> str:
        return "".join(map(str, self.bits))

    def __xor__(self, other: BitKey) -> BitKey:
        if self.length != other.length:
            raise ValueError("XOR needs equal-length keys")
        return BitKey(tuple(a ^ b for a, b in zip(self.bits, other.bits)), "recovered")

    def __repr__(self) -> str:
        return f"BitKey({self.length} bits, origin={self.origin}, hex={self.hex()})"


def encode(key: BitKey, params: RingParams) -> Plaintext:
    if key.length > params.n:
        raise CapacityError(f"{key.length}-bit key exceeds ring dimension {params.n}")
    return Plaintext.from_coeffs(key.bits, params)


def decode(m: Plaintext, length: int) -> BitKey:
    if not 0 < length <= m.params.n:
        raise CapacityError(f"cannot decode {length} bits from dimension {m.params.n}")
    coeffs = m.m.coeffs[:length]
    return BitKey(tuple(int(c) & 1 for c in coeffs), "recovered")


def hxor(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    return hadd(a, b)
