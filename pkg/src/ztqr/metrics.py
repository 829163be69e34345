"""Per-operation timing records emitted by relays."""

from __future__ import annotations

import contextlib
import threading
import time
from dataclasses import dataclass, fields
from typing import Iterator

OP_KINDS = ("initial-xor", "undo-xor", "redo-xor", "final-undo", "baseline-xor")
HOMOMORPHIC_OPS = OP_KINDS[:4]

# Methodology note written at the top of every bench CSV.
CPU_METHOD = "cpu_pct = 100 * thread CPU time / wall time of the same operation (time.thread_time_ns)"


@dataclass(frozen=True)
class BenchRecord:
    relay_id: str
    op_kind: str
    key_bits: int
    duration_ms: float
    cpu_pct: float
    payload_bytes: int
    exchange_id: str

    def __post_init__(self) -> None:
        if self.op_kind not in OP_KINDS:
            raise ValueError(f"unknown op_kind {self.op_kind!r}")
        if self.duration_ms <= 0:
            raise ValueError("duration_ms must be positive")


BENCH_COLUMNS = tuple(f.name for f in fields(BenchRecord))


class Timing:
    __slots__ = ("wall_ns", "cpu_ns")

    def __init__(self) -> None:
        self.wall_ns = 0
        self.cpu_ns = 0

    @property
    def duration_ms(self) -> float:
        return max(self.wall_ns, 1) / 1e6

    @property
    def cpu_pct(self) -> float:
        return 100.0 * self.cpu_ns / max(self.wall_ns, 1)


@contextlib.contextmanager
def timed() -> Iterator[Timing]:
    t = Timing()
    w0, c0 = time.perf_counter_ns(), time.thread_time_ns()
    try:
        yield t
    finally:
        t.wall_ns = time.perf_counter_ns() - w0
        t.cpu_ns = time.thread_time_ns() - c0


class Recorder:
    def __init__(self) -> None:
        self.records: list[BenchRecord] = []
        self._lock = threading.Lock()

    def add(self, relay_id: str, op_kind: str, key_bits: int, timing: Timing,
            payload_bytes: int, exchange_id: str) -> None:
        rec = BenchRecord(relay_id, op_kind, key_bits, timing.duration_ms, min(timing.cpu_pct, 100.0),
                          payload_bytes, exchange_id)
        with self._lock:
            self.records.append(rec)

    def clear(self) -> None:
        with self._lock:
            self.records.clear()
