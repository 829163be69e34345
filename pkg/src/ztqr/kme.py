"""Simulated point-to-point QKD link at the key-pool level.

Both KMEs of a link wrap one shared :class:`KeyPool`, which is what keeps them
synchronised.  Replenishment is driven by a virtual clock; keys are drawn from
a :class:`~ztqr.qrng.RandomSource` and QBER is recorded but never applied.
"""

from __future__ import annotations

import base64
import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any

from .errors import BadRequestError, ConflictError, KeyShortageError, NotFoundError
from .gf2 import BitKey
from .qrng import RandomSource, SeededSource

AVAILABLE, RESERVED, CONSUMED, VOIDED = "available", "reserved", "consumed", "voided"
MAX_KEYS_PER_REQUEST = 128
MIN_KEY_SIZE = 8


@dataclass(frozen=True)
class LinkParams:
    link_id: str
    key_rate_bps: float = 2048.0
    qber: float = 0.0
    key_size_bits: int = 256
    pool_capacity: int = 4096

    def __post_init__(self) -> None:
        if self.key_rate_bps <= 0:
            raise ValueError("key_rate_bps must be positive")
        if not 0 <= self.qber < 0.11:
            raise ValueError("qber must lie in [0, 0.11)")
        if self.key_size_bits not in (128, 256):
            raise ValueError("key_size_bits must be 128 or 256")
        if self.pool_capacity < 1:
            raise ValueError("pool_capacity must be at least 1")


@dataclass
class KeyPoolEntry:
    key_ID: str
    key: BitKey
    state: str = AVAILABLE
    created_at: float = 0.0
    served_bits: int | None = None
    reserved_via: str | None = None
    master_sae: str | None = None
    slave_sae: str | None = None

    def served_key(self) -> BitKey:
        size = self.served_bits or self.key.length
        return BitKey(self.key.bits[:size], "qkd-link")


class KeyPool:
    """The synchronised key store shared by the two KMEs of one link."""

    def __init__(self, params: LinkParams, source: RandomSource | None = None) -> None:
        self.params = params
        self.source = source or SeededSource(f"link:{params.link_id}")
        self.lock = threading.RLock()
        self.entries: OrderedDict[str, KeyPoolEntry] = OrderedDict()
        self._available: OrderedDict[str, None] = OrderedDict()
        self.now = 0.0
        self.dropped = 0
        self.produced_keys = 0
        self._credit_bits = 0.0

    @property
    def produced_bits(self) -> int:
        return self.produced_keys * self.params.key_size_bits

    @property
    def available_count(self) -> int:
        return len(self._available)

    def replenish(self, elapsed: float) -> int:
        """Advance the link by ``elapsed`` seconds; returns the number of keys added.

        Fractional key material carries over between calls so the long-run
        production equals the configured rate.
        """
        if elapsed <= 0:
            raise ValueError("elapsed must be positive")
        size = self.params.key_size_bits
        with self.lock:
            self.now += elapsed
            self._credit_bits += self.params.key_rate_bps * elapsed
            due = int(self._credit_bits // size)
            self._credit_bits -= due * size
            room = max(0, self.params.pool_capacity - len(self._available))
            added = min(due, room)
            self.dropped += due - added
            for _ in range(added):
                key = BitKey.from_bytes(self.source.read(size // 8), size, origin="qkd-link")
                entry = KeyPoolEntry(str(uuid.uuid4()), key, created_at=self.now)
                self.entries[entry.key_ID] = entry
                self._available[entry.key_ID] = None
            self.produced_keys += added
            return added

    def reserve(self, count: int, size: int, via: str, master: str, slave: str) -> list[KeyPoolEntry]:
        with self.lock:
            if len(self._available) < count:
                raise KeyShortageError(
                    f"link {self.params.link_id}: {count} keys requested, {len(self._available)} available",
                    details=[{"link_id": self.params.link_id, "available": len(self._available),
                              "requested": count}])
            out = []
            for _ in range(count):
                key_id, _ = self._available.popitem(last=False)
                entry = self.entries[key_id]
                entry.state = RESERVED
                entry.served_bits = size
                entry.reserved_via, entry.master_sae, entry.slave_sae = via, master, slave
                out.append(entry)
            return out

    def consume(self, key_ids: list[str], via: str) -> list[KeyPoolEntry]:
        with self.lock:
            missing = [k for k in key_ids if k not in self.entries]
            if missing:
                raise NotFoundError(f"unknown key_ID(s): {', '.join(missing)}",
                                    details=[{"key_ID": k} for k in missing])
            used = [k for k in key_ids if self.entries[k].state in (CONSUMED, VOIDED)]
            if used:
                raise ConflictError(f"key_ID(s) already consumed or voided: {', '.join(used)}",
                                    details=[{"key_ID": k} for k in used])
            same_side = [k for k in key_ids if self.entries[k].reserved_via == via]
            if same_side:
                raise ConflictError(f"key_ID(s) were issued by this KME: {', '.join(same_side)}")
            if len(set(key_ids)) != len(key_ids):
                raise ConflictError("duplicate key_ID in request")
            out = []
            for k in key_ids:
                entry = self.entries[k]
                self._available.pop(k, None)
                entry.state = CONSUMED
                out.append(entry)
            return out

    def void(self, key_ids: list[str]) -> int:
        with self.lock:
            n = 0
            for k in key_ids:
                entry = self.entries.get(k)
                if entry is not None and entry.state != CONSUMED and entry.state != VOIDED:
                    self._available.pop(k, None)
                    entry.state = VOIDED
                    n += 1
            return n

    def snapshot(self) -> dict[str, tuple[str, str]]:
        """``key_ID -> (hex key, state)`` for entries not yet consumed."""
        with self.lock:
            return {k: (e.key.hex(), e.state) for k, e in self.entries.items() if e.state != CONSUMED}


def _container(entries: list[KeyPoolEntry]) -> dict[str, Any]:
    return {"keys": [{"key_ID": e.key_ID, "key": base64.b64encode(e.served_key().to_bytes()).decode()}
                     for e in entries]}


@dataclass
class Kme:
    """One end of a link; ``local_sae`` is the relay attached to this KME."""

    kme_id: str
    pool: KeyPool
    local_sae: str
    peer_sae: str
    peer_kme_id: str = ""
    requests: int = field(default=0, init=False)

    def _check_peer(self, sae_id: str) -> None:
        if sae_id != self.peer_sae:
            raise NotFoundError(f"KME {self.kme_id} has no link to SAE {sae_id!r}")

    def _check_size(self, size: int | None) -> int:
        size = self.pool.params.key_size_bits if size is None else int(size)
        if size % 8 or not MIN_KEY_SIZE <= size <= self.pool.params.key_size_bits:
            raise BadRequestError(
                f"size {size} unsupported; multiples of 8 in [{MIN_KEY_SIZE}, {self.pool.params.key_size_bits}]")
        return size

    def get_key(self, slave_sae_id: str, number: int = 1, size: int | None = None) -> dict[str, Any]:
        self._check_peer(slave_sae_id)
        size = self._check_size(size)
        if not 1 <= int(number) <= MAX_KEYS_PER_REQUEST:
            raise BadRequestError(f"number must be in [1, {MAX_KEYS_PER_REQUEST}]")
        self.requests += 1
        entries = self.pool.reserve(int(number), size, self.kme_id, self.local_sae, slave_sae_id)
        return _container(entries)

    def get_key_with_ids(self, master_sae_id: str, key_ids: list[str]) -> dict[str, Any]:
        self._check_peer(master_sae_id)
        if not key_ids:
            raise BadRequestError("key_IDs must not be empty")
        self.requests += 1
        return _container(self.pool.consume(list(key_ids), self.kme_id))

    def get_status(self, slave_sae_id: str) -> dict[str, Any]:
        self._check_peer(slave_sae_id)
        p = self.pool.params
        return {
            "source_KME_ID": self.kme_id,
            "target_KME_ID": self.peer_kme_id,
            "master_SAE_ID": self.local_sae,
            "slave_SAE_ID": slave_sae_id,
            "key_size": p.key_size_bits,
            "stored_key_count": self.pool.available_count,
            "max_key_count": p.pool_capacity,
            "max_key_per_request": MAX_KEYS_PER_REQUEST,
            "max_key_size": p.key_size_bits,
            "min_key_size": MIN_KEY_SIZE,
            "max_SAE_ID_count": 0,
            "key_rate_bps": p.key_rate_bps,
            "qber": p.qber,
            "link_id": p.link_id,
        }

    def void_keys(self, key_ids: list[str]) -> dict[str, Any]:
        """Simulator extension: return reserved keys to nobody (failure cleanup)."""
        return {"voided": self.pool.void(list(key_ids))}


def make_link(params: LinkParams, sae_a: str, sae_b: str, kme_a: str, kme_b: str,
              source: RandomSource | None = None) -> tuple[KeyPool, Kme, Kme]:
    pool = KeyPool(params, source)
    return (pool,
            Kme(kme_a, pool, local_sae=sae_a, peer_sae=sae_b, peer_kme_id=kme_b),
            Kme(kme_b, pool, local_sae=sae_b, peer_sae=sae_a, peer_kme_id=kme_a))
