"""Instrumentation for the zero-plaintext-exposure audit.

Relays mark the code they run with :func:`acting_as`; every :class:`BitKey`
construction reports ``(acting relay, origin)`` to registered observers.
Nothing is recorded unless an observer is installed.
"""

from __future__ import annotations

import contextlib
import contextvars
import threading
from typing import Callable, Iterator

_acting: contextvars.ContextVar[str | None] = contextvars.ContextVar("ztqr_acting_relay", default=None)
_observers: list[Callable[[str | None, str], None]] = []
_lock = threading.Lock()


def current_relay() -> str | None:
    return _acting.get()


@contextlib.contextmanager
def acting_as(relay_id: str) -> Iterator[None]:
    token = _acting.set(relay_id)
    try:
        yield
    finally:
        _acting.reset(token)


def notify_bitkey(origin: str) -> None:
    if _observers:
        relay = _acting.get()
        for cb in list(_observers):
            cb(relay, origin)


@contextlib.contextmanager
def observe_bitkeys() -> Iterator[list[tuple[str | None, str]]]:
    """Collect ``(relay_id, origin)`` for every BitKey built inside the block."""
    seen: list[tuple[str | None, str]] = []

    def cb(relay: str | None, origin: str) -> None:
        with _lock:
            seen.append((relay, origin))

    _observers.append(cb)
    try:
        yield seen
    finally:
        _observers.remove(cb)
