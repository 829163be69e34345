"""Network-wide repository of relay public keys and ring parameters.

Backends: in-memory, directory-on-disk (``<relay_id>.pk``, ``<relay_id>.params``
plus a ``<relay_id>.json`` sidecar holding digest and timestamp) and an HTTP
service.  Contents are digest-checked on every fetch but not authenticated:
whoever can write to the backend is trusted.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol

from filelock import FileLock
from fastapi import FastAPI
from pydantic import BaseModel

from .errors import CorruptRecordError, NotFoundError, SerializationError, ValidationError
from .fhe import PublicKey, RingParams, deserialize_params, deserialize_public_key
from .httpcommon import JsonClient, create_app

_RELAY_ID = re.compile(r"^[A-Za-z0-9._-]{1,64}$")


def content_digest(public_key_blob: bytes, params_blob: bytes) -> str:
    h = hashlib.sha256(b"ztqr-registry/1")
    for blob in (public_key_blob, params_blob):
        h.update(len(blob).to_bytes(8, "little"))
        h.update(blob)
    return h.hexdigest()


@dataclass(frozen=True)
class RegistryRecord:
    relay_id: str
    public_key_blob: bytes
    params_blob: bytes
    published_at: float
    content_digest: str

    def verify(self) -> None:
        if content_digest(self.public_key_blob, self.params_blob) != self.content_digest:
            raise CorruptRecordError(f"registry record for {self.relay_id} fails its digest")

    def load(self) -> tuple[RingParams, PublicKey]:
        params = deserialize_params(self.params_blob)
        return params, deserialize_public_key(self.public_key_blob, params)

    def to_json(self) -> dict[str, Any]:
        return {"relay_id": self.relay_id,
                "public_key": base64.b64encode(self.public_key_blob).decode(),
                "params": base64.b64encode(self.params_blob).decode(),
                "digest": self.content_digest,
                "published_at": self.published_at}

    @classmethod
    def from_json(cls, body: dict[str, Any]) -> RegistryRecord:
        try:
            return cls(body["relay_id"], base64.b64decode(body["public_key"], validate=True),
                       base64.b64decode(body["params"], validate=True),
                       float(body.get("published_at", 0.0)), body["digest"])
        except (KeyError, TypeError, binascii.Error) as exc:
            raise ValidationError(f"malformed registry record: {exc}") from exc


def validate_blobs(relay_id: str, public_key_blob: bytes, params_blob: bytes) -> None:
    if not _RELAY_ID.match(relay_id):
        raise ValidationError(f"invalid relay_id {relay_id!r}")
    try:
        params = deserialize_params(params_blob)
        deserialize_public_key(public_key_blob, params)
    except SerializationError as exc:
        raise ValidationError(f"registry blobs for {relay_id} do not deserialize: {exc.message}") from exc


class Registry(Protocol):
    def publish(self, relay_id: str, public_key_blob: bytes, params_blob: bytes) -> RegistryRecord: ...

    def fetch(self, relay_id: str) -> RegistryRecord: ...


class MemoryRegistry:
    def __init__(self) -> None:
        self._records: dict[str, RegistryRecord] = {}
        self._lock = threading.Lock()

    def publish(self, relay_id: str, public_key_blob: bytes, params_blob: bytes) -> RegistryRecord:
        validate_blobs(relay_id, public_key_blob, params_blob)
        rec = RegistryRecord(relay_id, bytes(public_key_blob), bytes(params_blob), time.time(),
                             content_digest(public_key_blob, params_blob))
        with self._lock:
            self._records[relay_id] = rec
        return rec

    def fetch(self, relay_id: str) -> RegistryRecord:
        with self._lock:
            rec = self._records.get(relay_id)
        if rec is None:
            raise NotFoundError(f"no registry record for relay {relay_id!r}")
        rec.verify()
        return rec

    def relay_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._records)


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class DirectoryRegistry:
    def __init__(self, root: str | os.PathLike[str]) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _lock(self, relay_id: str) -> FileLock:
        return FileLock(str(self.root / f".{relay_id}.lock"))

    def publish(self, relay_id: str, public_key_blob: bytes, params_blob: bytes) -> RegistryRecord:
        validate_blobs(relay_id, public_key_blob, params_blob)
        digest = content_digest(public_key_blob, params_blob)
        now = time.time()
        with self._lock(relay_id):
            _atomic_write(self.root / f"{relay_id}.pk", bytes(public_key_blob))
            _atomic_write(self.root / f"{relay_id}.params", bytes(params_blob))
            _atomic_write(self.root / f"{relay_id}.json",
                          json.dumps({"digest": digest, "published_at": now}).encode())
        return RegistryRecord(relay_id, bytes(public_key_blob), bytes(params_blob), now, digest)

    def fetch(self, relay_id: str) -> RegistryRecord:
        if not _RELAY_ID.match(relay_id):
            raise NotFoundError(f"no registry record for relay {relay_id!r}")
        with self._lock(relay_id):
            try:
                pk = (self.root / f"{relay_id}.pk").read_bytes()
                params = (self.root / f"{relay_id}.params").read_bytes()
                meta = json.loads((self.root / f"{relay_id}.json").read_text())
            except FileNotFoundError:
                raise NotFoundError(f"no registry record for relay {relay_id!r}") from None
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise CorruptRecordError(f"registry sidecar for {relay_id} unreadable: {exc}") from exc
        rec = RegistryRecord(relay_id, pk, params, float(meta.get("published_at", 0.0)),
                             str(meta.get("digest", "")))
        rec.verify()
        return rec

    def relay_ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))


class HttpRegistry(JsonClient):
    """Client for :func:`create_registry_app`."""

    def publish(self, relay_id: str, public_key_blob: bytes, params_blob: bytes) -> RegistryRecord:
        rec = RegistryRecord(relay_id, public_key_blob, params_blob, time.time(),
                             content_digest(public_key_blob, params_blob))
        body = self.request("PUT", f"/registry/{relay_id}", rec.to_json())
        return RegistryRecord.from_json(body)

    def fetch(self, relay_id: str) -> RegistryRecord:
        rec = RegistryRecord.from_json(self.request("GET", f"/registry/{relay_id}"))
        if rec.relay_id != relay_id:
            raise CorruptRecordError(f"registry answered for {rec.relay_id!r} instead of {relay_id!r}")
        rec.verify()
        return rec


class RecordBody(BaseModel):
    relay_id: str
    public_key: str
    params: str
    digest: str = ""
    published_at: float = 0.0


def create_registry_app(backend: MemoryRegistry | DirectoryRegistry) -> FastAPI:
    app = create_app("ztqr-registry")

    @app.get("/registry/{relay_id}")
    def get_record(relay_id: str) -> dict[str, Any]:
        return backend.fetch(relay_id).to_json()

    @app.put("/registry/{relay_id}")
    def put_record(relay_id: str, body: RecordBody) -> dict[str, Any]:
        if body.relay_id != relay_id:
            raise ValidationError("relay_id in body does not match the path")
        rec = RegistryRecord.from_json(body.model_dump())
        if rec.content_digest and rec.content_digest != content_digest(rec.public_key_blob, rec.params_blob):
            raise ValidationError("uploaded digest does not match the blobs")
        return backend.publish(relay_id, rec.public_key_blob, rec.params_blob).to_json()

    @app.get("/registry")
    def list_records() -> dict[str, list[str]]:
        return {"relays": backend.relay_ids()}

    return app


def open_registry(endpoint: str) -> MemoryRegistry | DirectoryRegistry | HttpRegistry:
    """``http(s)://...`` selects the HTTP client, ``dir:<path>`` or a bare path the directory backend."""
    if endpoint.startswith(("http://", "https://")):
        return HttpRegistry(endpoint)
    if endpoint.startswith("dir:"):
        endpoint = endpoint[4:]
    return DirectoryRegistry(endpoint)
