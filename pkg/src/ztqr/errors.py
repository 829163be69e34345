"""Exception hierarchy shared by every ztqr component.

Each service-facing error carries an ``http_status`` so the HTTP layers can map
it without a lookup table, and an optional ``details`` list that is echoed in
the ETSI-014 style ``{"message", "details"}`` error body.
"""

from __future__ import annotations

from typing import Any


class ZtqrError(Exception):
    http_status = 500

    def __init__(self, message: str, *, details: list[dict[str, Any]] | None = None,
                 relay_id: str | None = None, exchange_id: str | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = list(details or [])
        self.relay_id = relay_id
        self.exchange_id = exchange_id

    def to_body(self) -> dict[str, Any]:
        details = list(self.details)
        ctx = {k: v for k, v in (("relay", self.relay_id), ("exchange_id", self.exchange_id)) if v}
        if ctx:
            details.append(ctx)
        body: dict[str, Any] = {"message": self.message, "error": type(self).__name__}
        if details:
            body["details"] = details
        return body


# --- crypto / codec --------------------------------------------------------

class IncompatibleContextError(ZtqrError, ValueError):
    """Operands were produced under different ring parameters."""
    http_status = 400


class CapacityError(ZtqrError, ValueError):
    """A bit key does not fit into the plaintext ring."""
    http_status = 400


class SerializationError(ZtqrError, ValueError):
    http_status = 400


class DecodeError(ZtqrError, ValueError):
    """Payload decoding failed; ``stage`` names the single failing stage."""
    http_status = 400
    STAGES = ("envelope", "base64", "gzip", "deserialize")

    def __init__(self, stage: str, message: str, **kw: Any) -> None:
        if stage not in self.STAGES:
            raise ValueError(f"unknown decode stage {stage!r}")
        super().__init__(f"{stage}: {message}", **kw)
        self.stage = stage
        self.details.append({"stage": stage})


# --- entropy ---------------------------------------------------------------

class EntropySourceError(ZtqrError):
    http_status = 503


class EntropyDepletedError(EntropySourceError):
    """A file-fed source ran out of bytes; it never wraps around."""


# --- key delivery ----------------------------------------------------------

class NotFoundError(ZtqrError, LookupError):
    http_status = 404


class ConflictError(ZtqrError):
    http_status = 409


class KeyShortageError(ZtqrError):
    """Not enough keys in a pool to satisfy a request (maps to 503)."""
    http_status = 503


class PoolFullError(ZtqrError):
    http_status = 503


class DependencyError(ZtqrError):
    """A collaborator (KME, registry, next hop) failed."""
    http_status = 502


class UnroutableError(ZtqrError):
    http_status = 400


class BadRequestError(ZtqrError, ValueError):
    http_status = 400


# --- registry --------------------------------------------------------------

class ValidationError(ZtqrError, ValueError):
    http_status = 400


class CorruptRecordError(ZtqrError):
    http_status = 500


# --- lifecycle / harness ---------------------------------------------------

class ConfigError(ZtqrError, ValueError):
    pass


class StartupError(ZtqrError):
    pass


class RegistryUnreachableError(StartupError):
    pass


class CorruptKeyError(StartupError):
    """Persisted relay secret key failed to load or does not match its public key."""


class PortConflictError(ZtqrError):
    pass


class HookDisabledError(ZtqrError):
    http_status = 403


class ReportParseError(ZtqrError, ValueError):
    pass


_BY_NAME = {cls.__name__: cls for cls in list(globals().values())
            if isinstance(cls, type) and issubclass(cls, ZtqrError)}


def from_body(status: int, body: Any) -> ZtqrError:
    """Rebuild an exception from an HTTP error body produced by ``to_body``."""
    if not isinstance(body, dict):
        return DependencyError(f"HTTP {status}: {body!r}")
    name = body.get("error")
    message = str(body.get("message", f"HTTP {status}"))
    details = [d for d in body.get("details", []) if isinstance(d, dict)]
    ctx = next((d for d in reversed(details) if "relay" in d or "exchange_id" in d), {})
    kw = {"relay_id": ctx.get("relay"), "exchange_id": ctx.get("exchange_id")}
    rest = [d for d in details if d is not ctx and "stage" not in d]
    cls = _BY_NAME.get(name or "")
    if cls is DecodeError:
        stage = next((d["stage"] for d in details if "stage" in d), "envelope")
        err: ZtqrError = DecodeError(stage, message.split(": ", 1)[-1], **kw)
    elif cls is not None:
        err = cls(message, **kw)
    else:
        err = {404: NotFoundError, 409: ConflictError, 503: KeyShortageError}.get(
            status, DependencyError)(message, **kw)
    err.details[:0] = rest
    return err
