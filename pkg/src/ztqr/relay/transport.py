"""East-west delivery of ext_keys and void envelopes between relays."""

from __future__ import annotations

import json
from typing import Any, Callable, Protocol

from ..errors import DependencyError
from ..httpcommon import JsonClient

EXT_KEYS_PATH = "/api/v1/ext_keys"
VOID_PATH = "/api/v1/void"

Observer = Callable[[str, str, dict[str, Any]], None]


class PeerHandler(Protocol):
    def receive_ext_keys(self, body: Any) -> dict[str, Any]: ...
    def receive_void(self, body: Any) -> dict[str, Any]: ...


class InProcessTransport:
    """Delivers envelopes by direct call, after a JSON round trip.

    The round trip keeps in-process runs honest about what actually crosses
    the wire.  Observers see ``(kind, peer, body)`` for every envelope sent.
    """

    def __init__(self) -> None:
        self.peers: dict[str, PeerHandler] = {}
        self.observers: list[Observer] = []

    def register(self, relay_id: str, handler: PeerHandler) -> None:
        self.peers[relay_id] = handler

    def _deliver(self, kind: str, peer: str, body: dict[str, Any]) -> dict[str, Any]:
        handler = self.peers.get(peer)
        if handler is None:
            raise DependencyError(f"relay {peer!r} is not reachable", relay_id=peer)
        wire_body = json.loads(json.dumps(body))
        for cb in list(self.observers):
            cb(kind, peer, wire_body)
        if kind == "ext_keys":
            return handler.receive_ext_keys(wire_body)
        return handler.receive_void(wire_body)

    def send_ext_keys(self, peer: str, body: dict[str, Any]) -> dict[str, Any]:
        return self._deliver("ext_keys", peer, body)

    def send_void(self, peer: str, body: dict[str, Any]) -> dict[str, Any]:
        return self._deliver("void", peer, body)


class HttpTransport:
    def __init__(self, endpoints: dict[str, str], timeout: float = 120.0) -> None:
        self._clients = {rid: JsonClient(url, timeout=timeout) for rid, url in endpoints.items()}

    def _client(self, peer: str) -> JsonClient:
        try:
            return self._clients[peer]
        except KeyError:
            raise DependencyError(f"no endpoint configured for relay {peer!r}", relay_id=peer) from None

    def send_ext_keys(self, peer: str, body: dict[str, Any]) -> dict[str, Any]:
        return self._client(peer).request("POST", EXT_KEYS_PATH, body)

    def send_void(self, peer: str, body: dict[str, Any]) -> dict[str, Any]:
        return self._client(peer).request("POST", VOID_PATH, body)

    def close(self) -> None:
        for c in self._clients.values():
            c.close()


__all__ = ["EXT_KEYS_PATH", "VOID_PATH", "HttpTransport", "InProcessTransport"]
