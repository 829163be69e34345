"""ETSI GS QKD 014 shaped key-delivery surface.

The same three endpoints front both the simulated KMEs and the relays'
northbound SAE interface, so the schemas, router and client live here.

Error status codes (not fixed by the standard for these failures):

    400  malformed request / unsupported size / unroutable
    404  unknown SAE or key_ID
    409  key already consumed or delivered
    502  a dependency (registry, next hop, KME) failed
    503  not enough keys, or entropy depleted
"""

from __future__ import annotations

from typing import Any, Callable, Optional, Protocol

from fastapi import APIRouter, Header, Request
from pydantic import BaseModel, ConfigDict

from .errors import BadRequestError, NotFoundError
from .httpcommon import JsonClient

SAE_HEADER = "X-SAE-ID"

KEY_CONTAINER_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Key container",
    "type": "object",
    "required": ["keys"],
    "properties": {
        "keys": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["key_ID", "key"],
                "properties": {
                    "key_ID": {"type": "string", "format": "uuid",
                               "pattern": "^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$"},
                    "key": {"type": "string", "pattern": "^[A-Za-z0-9+/]*={0,2}$"},
                },
            },
        },
        "key_container_extension": {"type": "object"},
    },
}

STATUS_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Status",
    "type": "object",
    "required": ["source_KME_ID", "target_KME_ID", "master_SAE_ID", "slave_SAE_ID", "key_size",
                 "stored_key_count", "max_key_count", "max_key_per_request", "max_key_size",
                 "min_key_size", "max_SAE_ID_count"],
    "properties": {
        "source_KME_ID": {"type": "string"},
        "target_KME_ID": {"type": "string"},
        "master_SAE_ID": {"type": "string"},
        "slave_SAE_ID": {"type": "string"},
        "key_size": {"type": "integer", "minimum": 1},
        "stored_key_count": {"type": "integer", "minimum": 0},
        "max_key_count": {"type": "integer", "minimum": 0},
        "max_key_per_request": {"type": "integer", "minimum": 1},
        "max_key_size": {"type": "integer", "minimum": 1},
        "min_key_size": {"type": "integer", "minimum": 1},
        "max_SAE_ID_count": {"type": "integer", "minimum": 0},
        "key_rate_bps": {"type": "number"},
        "qber": {"type": "number"},
    },
}

ERROR_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Error",
    "type": "object",
    "required": ["message"],
    "properties": {"message": {"type": "string"}, "details": {"type": "array",
                                                             "items": {"type": "object"}}},
}


class KeyRequest(BaseModel):
    model_config = ConfigDict(extra="allow")
    number: int = 1
    size: Optional[int] = None
    additional_slave_SAE_IDs: Optional[list[str]] = None
    extension_mandatory: Optional[list[dict[str, Any]]] = None
    extension_optional: Optional[list[dict[str, Any]]] = None


class KeyIdItem(BaseModel):
    key_ID: str


class KeyIdRequest(BaseModel):
    key_IDs: list[KeyIdItem]


class KeyService(Protocol):
    def status(self, slave_sae_id: str, caller: str | None) -> dict[str, Any]: ...

    def enc_keys(self, slave_sae_id: str, number: int, size: int | None,
                 caller: str | None) -> dict[str, Any]: ...

    def dec_keys(self, master_sae_id: str, key_ids: list[str],
                 caller: str | None) -> dict[str, Any]: ...


class KmeKeyService:
    """Adapts a :class:`~ztqr.kme.Kme` to :class:`KeyService`."""

    def __init__(self, kme) -> None:
        self.kme = kme

    def status(self, slave_sae_id, caller=None):
        return self.kme.get_status(slave_sae_id)

    def enc_keys(self, slave_sae_id, number, size, caller=None):
        return self.kme.get_key(slave_sae_id, number, size)

    def dec_keys(self, master_sae_id, key_ids, caller=None):
        return self.kme.get_key_with_ids(master_sae_id, key_ids)

    def void_keys(self, key_ids):
        return self.kme.void_keys(key_ids)


def _reject_mandatory(req: KeyRequest) -> None:
    if req.extension_mandatory:
        raise BadRequestError("mandatory extensions are not supported",
                              details=[{"extension_mandatory": req.extension_mandatory}])
    if req.additional_slave_SAE_IDs:
        raise BadRequestError("additional_slave_SAE_IDs is not supported")


def key_router(resolve: Callable[[dict[str, str]], KeyService], prefix: str = "") -> APIRouter:
    """Routes ``{prefix}/api/v1/keys/...``.

    ``resolve`` receives the request's path parameters, so a prefix such as
    ``/kme/{kme_id}`` selects one of several hosted KMEs.
    """
    router = APIRouter(prefix=prefix)

    @router.get("/api/v1/keys/{slave_SAE_ID}/status")
    def status(slave_SAE_ID: str, request: Request,
               x_sae_id: Optional[str] = Header(None, alias=SAE_HEADER)) -> dict[str, Any]:
        return resolve(request.path_params).status(slave_SAE_ID, x_sae_id)

    @router.post("/api/v1/keys/{slave_SAE_ID}/enc_keys")
    def enc_keys(slave_SAE_ID: str, req: KeyRequest, request: Request,
                 x_sae_id: Optional[str] = Header(None, alias=SAE_HEADER)) -> dict[str, Any]:
        _reject_mandatory(req)
        return resolve(request.path_params).enc_keys(slave_SAE_ID, req.number, req.size, x_sae_id)

    @router.get("/api/v1/keys/{slave_SAE_ID}/enc_keys")
    def enc_keys_get(slave_SAE_ID: str, request: Request, number: int = 1, size: Optional[int] = None,
                     x_sae_id: Optional[str] = Header(None, alias=SAE_HEADER)) -> dict[str, Any]:
        return resolve(request.path_params).enc_keys(slave_SAE_ID, number, size, x_sae_id)

    @router.post("/api/v1/keys/{master_SAE_ID}/dec_keys")
    def dec_keys(master_SAE_ID: str, req: KeyIdRequest, request: Request,
                 x_sae_id: Optional[str] = Header(None, alias=SAE_HEADER)) -> dict[str, Any]:
        return resolve(request.path_params).dec_keys(
            master_SAE_ID, [k.key_ID for k in req.key_IDs], x_sae_id)

    @router.get("/api/v1/keys/{master_SAE_ID}/dec_keys")
    def dec_keys_get(master_SAE_ID: str, key_ID: str, request: Request,
                     x_sae_id: Optional[str] = Header(None, alias=SAE_HEADER)) -> dict[str, Any]:
        return resolve(request.path_params).dec_keys(master_SAE_ID, [key_ID], x_sae_id)

    @router.post("/sim/void_keys")
    def void_keys(req: KeyIdRequest, request: Request) -> dict[str, Any]:
        svc = resolve(request.path_params)
        if not hasattr(svc, "void_keys"):
            raise NotFoundError("void_keys is only offered by simulated KMEs")
        return svc.void_keys([k.key_ID for k in req.key_IDs])

    return router


class Etsi014Client(JsonClient):
    """Client for any ETSI-014 shaped endpoint; ``sae_id`` is sent as the caller identity."""

    def __init__(self, base_url: str, sae_id: str | None = None, **kw: Any) -> None:
        headers = {SAE_HEADER: sae_id} if sae_id else None
        super().__init__(base_url, headers=headers, **kw)
        self.sae_id = sae_id

    def status(self, slave_sae_id: str, caller: str | None = None) -> dict[str, Any]:
        return self.request("GET", f"/api/v1/keys/{slave_sae_id}/status")

    def enc_keys(self, slave_sae_id: str, number: int = 1, size: int | None = None,
                 caller: str | None = None) -> dict[str, Any]:
        body: dict[str, Any] = {"number": number}
        if size is not None:
            body["size"] = size
        return self.request("POST", f"/api/v1/keys/{slave_sae_id}/enc_keys", body)

    def dec_keys(self, master_sae_id: str, key_ids: list[str],
                 caller: str | None = None) -> dict[str, Any]:
        return self.request("POST", f"/api/v1/keys/{master_sae_id}/dec_keys",
                            {"key_IDs": [{"key_ID": k} for k in key_ids]})

    def void_keys(self, key_ids: list[str]) -> dict[str, Any]:
        return self.request("POST", "/sim/void_keys", {"key_IDs": [{"key_ID": k} for k in key_ids]})
