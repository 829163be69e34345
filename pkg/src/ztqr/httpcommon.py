"""FastAPI/httpx glue shared by the KME, registry and relay services."""

from __future__ import annotations

import json
from typing import Any

import httpx
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .errors import DependencyError, ZtqrError, from_body


def create_app(title: str) -> FastAPI:
    app = FastAPI(title=title)

    @app.exception_handler(ZtqrError)
    async def _ztqr_error(_: Request, exc: ZtqrError) -> JSONResponse:
        return JSONResponse(status_code=exc.http_status, content=exc.to_body())

    @app.exception_handler(RequestValidationError)
    async def _validation(_: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={
            "message": "malformed request", "error": "BadRequestError",
            "details": [{"loc": ".".join(map(str, e.get("loc", ()))), "msg": e.get("msg", "")}
                        for e in exc.errors()]})

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok", "service": title}

    return app


class JsonClient:
    """Thin httpx wrapper that turns error bodies back into ztqr exceptions."""

    def __init__(self, base_url: str, *, timeout: float = 30.0, headers: dict[str, str] | None = None,
                 client: httpx.Client | None = None) -> None:
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def close(self) -> None:
        self._client.close()

    def request(self, method: str, path: str, body: Any = None,
                params: dict[str, Any] | None = None) -> Any:
        url = self.base_url + path
        try:
            resp = self._client.request(method, url, json=body, params=params)
        except httpx.HTTPError as exc:
            raise DependencyError(f"{method} {url} failed: {exc}") from exc
        try:
            data = resp.json()
        except (json.JSONDecodeError, ValueError):
            data = resp.text
        if resp.status_code >= 400:
            raise from_body(resp.status_code, data)
        return data
