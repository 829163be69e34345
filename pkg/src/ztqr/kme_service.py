"""HTTP host for any number of simulated KMEs under ``/kme/{kme_id}``."""

from __future__ import annotations

from typing import Callable

from fastapi import FastAPI
from pydantic import BaseModel

from .errors import NotFoundError
from .etsi014 import KmeKeyService, key_router
from .httpcommon import create_app
from .kme import Kme


class AdvanceRequest(BaseModel):
    seconds: float


class EnsureRequest(BaseModel):
    number: int = 1


def create_kme_app(kmes: dict[str, Kme], advance: Callable[[float], dict[str, int]] | None = None,
                   ensure: Callable[[int], dict[str, float]] | None = None) -> FastAPI:
    """``advance`` and ``ensure`` drive the virtual clock of a simulated deployment."""
    app = create_app("ztqr-kme-host")
    services = {kid: KmeKeyService(k) for kid, k in kmes.items()}

    def resolve(path_params: dict[str, str]) -> KmeKeyService:
        kid = path_params.get("kme_id", "")
        try:
            return services[kid]
        except KeyError:
            raise NotFoundError(f"unknown KME {kid!r}") from None

    app.include_router(key_router(resolve, prefix="/kme/{kme_id}"))

    @app.get("/kme")
    def list_kmes() -> dict[str, list[str]]:
        return {"kmes": sorted(kmes)}

    if advance is not None:
        @app.post("/sim/advance")
        def sim_advance(req: AdvanceRequest) -> dict[str, int]:
            return advance(req.seconds)

    if ensure is not None:
        @app.post("/sim/ensure")
        def sim_ensure(req: EnsureRequest) -> dict[str, float]:
            return ensure(req.number)

    return app
