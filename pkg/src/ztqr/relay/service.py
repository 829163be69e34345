"""HTTP face of a relay: ETSI-014 northbound plus the east-west envelope endpoints."""

from __future__ import annotations

from dataclasses import asdict
from typing import Any

from fastapi import Body, FastAPI

from ..etsi014 import key_router
from ..httpcommon import create_app
from .node import Relay
from .transport import EXT_KEYS_PATH, VOID_PATH


def create_relay_app(relay: Relay) -> FastAPI:
    app = create_app(f"ztqr-relay-{relay.relay_id}")
    app.include_router(key_router(lambda _params: relay))

    @app.post(EXT_KEYS_PATH)
    def ext_keys(body: Any = Body(...)) -> dict[str, Any]:
        return relay.receive_ext_keys(body)

    @app.post(VOID_PATH)
    def void(body: Any = Body(...)) -> dict[str, Any]:
        return relay.receive_void(body)

    @app.get("/admin/state")
    def state() -> dict[str, Any]:
        return relay.state_summary()

    @app.get("/admin/metrics")
    def metrics() -> list[dict[str, Any]]:
        return [asdict(r) for r in relay.recorder.records] if relay.recorder else []

    @app.delete("/admin/metrics")
    def clear_metrics() -> dict[str, str]:
        if relay.recorder:
            relay.recorder.clear()
        return {"status": "cleared"}

    return app
