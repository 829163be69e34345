"""Pluggable random-key sources standing in for a relay's external QRNG."""

from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError, EntropyDepletedError, EntropySourceError
from .gf2 import BitKey

OS_ENTROPY = "os-entropy"
SEEDED = "seeded-deterministic"
FILE_FED = "file-fed"
KINDS = (OS_ENTROPY, SEEDED, FILE_FED)
DEFAULT_KEY_LENGTHS = frozenset({128, 256})


class RandomSource:
    """Byte stream with a ``kind`` label; subclasses implement ``read``."""

    kind = ""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.allowed_lengths = DEFAULT_KEY_LENGTHS

    def read(self, nbytes: int) -> bytes:
        with self._lock:
            return self._read(nbytes)

    def _read(self, nbytes: int) -> bytes:
        raise NotImplementedError

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind}


class OsEntropySource(RandomSource):
    kind = OS_ENTROPY

    def _read(self, nbytes: int) -> bytes:
        try:
            return os.urandom(nbytes)
        except OSError as exc:
            raise EntropySourceError(f"os entropy unavailable: {exc}") from exc


class SeededSource(RandomSource):
    """SHAKE-256 keystream over ``seed``; identical on every platform."""

    kind = SEEDED

    def __init__(self, seed: int | bytes | str) -> None:
        super().__init__()
        self.seed = seed
        if isinstance(seed, int):
            material = seed.to_bytes(16, "little", signed=True)
        elif isinstance(seed, str):
            material = seed.encode()
        else:
            material = bytes(seed)
        self._material = b"ztqr-qrng/1" + material
        self._counter = 0
        self._buffer = b""

    def _read(self, nbytes: int) -> bytes:
        while len(self._buffer) < nbytes:
            block = hashlib.shake_256(self._material + self._counter.to_bytes(8, "little")).digest(64)
            self._counter += 1
            self._buffer += block
        out, self._buffer = self._buffer[:nbytes], self._buffer[nbytes:]
        return out

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "seed": self.seed}


class FileFedSource(RandomSource):
    """Consumes a captured byte file strictly once, front to back."""

    kind = FILE_FED

    def __init__(self, path: str | os.PathLike[str]) -> None:
        super().__init__()
        self.path = Path(path)
        try:
            self._data = self.path.read_bytes()
        except OSError as exc:
            raise EntropySourceError(f"cannot read entropy file {self.path}: {exc}") from exc
        self.cursor = 0

    @property
    def remaining(self) -> int:
        return len(self._data) - self.cursor

    def _read(self, nbytes: int) -> bytes:
        if nbytes > self.remaining:
            raise EntropyDepletedError(
                f"entropy file {self.path.name} exhausted: need {nbytes} bytes, {self.remaining} left")
        out = self._data[self.cursor:self.cursor + nbytes]
        self.cursor += nbytes
        return out

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "path": str(self.path), "cursor": self.cursor}


def make_source(spec: dict[str, Any] | str | None) -> RandomSource:
    """Build a source from a config mapping such as ``{"kind": "seeded-deterministic", "seed": 1}``."""
    if spec is None:
        return OsEntropySource()
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind", OS_ENTROPY)
    if kind == OS_ENTROPY:
        src: RandomSource = OsEntropySource()
    elif kind == SEEDED:
        if "seed" not in spec:
            raise ConfigError("seeded-deterministic source needs a seed")
        src = SeededSource(spec["seed"])
    elif kind == FILE_FED:
        if "path" not in spec:
            raise ConfigError("file-fed source needs a path")
        src = FileFedSource(spec["path"])
    else:
        raise ConfigError(f"unknown random source kind {kind!r}")
    if "lengths" in spec:
        src.allowed_lengths = frozenset(int(x) for x in spec["lengths"])
    return src


def generate_key(src: RandomSource, length: int) -> BitKey:
    if length not in src.allowed_lengths:
        raise ValueError(f"key length {length} not in {sorted(src.allowed_lengths)}")
    nbytes = (length + 7) // 8
    return BitKey.from_bytes(src.read(nbytes), length, origin="qrng")


@dataclass
class QrngSlot:
    """The mutable QRNG attachment point of a relay."""

    source: RandomSource = field(default_factory=OsEntropySource)
    history: list[dict[str, Any]] = field(default_factory=list)


def swap_source(slot: QrngSlot, new: RandomSource) -> QrngSlot:
    """Point ``slot`` at ``new``; already issued keys are untouched."""
    slot.history.append(slot.source.describe())
    slot.source = new
    return slot


__all__ = ["RandomSource", "OsEntropySource", "SeededSource", "FileFedSource", "QrngSlot",
           "make_source", "generate_key", "swap_source", "KINDS"]
