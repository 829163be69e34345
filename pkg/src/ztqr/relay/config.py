"""Relay configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..errors import ConfigError
from ..fhe import PROFILES

ZERO_TRUST = "zero-trust"
PLAINTEXT_BASELINE = "plaintext-baseline"
MODES = (ZERO_TRUST, PLAINTEXT_BASELINE)


@dataclass(frozen=True)
class RelayLink:
    link_id: str
    kme_id: str
    kme_endpoint: str
    peer_relay: str


@dataclass
class RelayConfig:
    relay_id: str
    zone: str
    local_sae_ids: list[str]
    links: list[RelayLink]
    routing: dict[str, tuple[str, str]]
    registry_endpoint: str = "memory"
    qrng: dict[str, Any] = field(default_factory=lambda: {"kind": "os-entropy"})
    fhe_profile: str = "desk"
    mode: str = ZERO_TRUST
    sae_directory: dict[str, str] = field(default_factory=dict)
    state_dir: Path | None = None
    host: str = "127.0.0.1"
    port: int = 0
    fhe_seed: int | None = None
    test_hooks: bool = False

    def __post_init__(self) -> None:
        self.validate()

    def link(self, link_id: str) -> RelayLink:
        for ln in self.links:
            if ln.link_id == link_id:
                return ln
        raise KeyError(link_id)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"{self.relay_id}: mode must be one of {MODES}")
        if self.fhe_profile not in PROFILES:
            raise ConfigError(f"{self.relay_id}: fhe_profile must be one of {PROFILES}")
        peers = {ln.peer_relay: ln for ln in self.links}
        link_ids = {ln.link_id: ln for ln in self.links}
        if len(link_ids) != len(self.links):
            raise ConfigError(f"{self.relay_id}: duplicate link ids")
        for dest, route in self.routing.items():
            if dest == self.relay_id:
                raise ConfigError(f"{self.relay_id}: routing table must not contain a self route")
            try:
                next_hop, link_id = route
            except (TypeError, ValueError):
                raise ConfigError(f"{self.relay_id}: route to {dest} must be [next_hop, link_id]") from None
            if next_hop not in peers:
                raise ConfigError(f"{self.relay_id}: next hop {next_hop} for {dest} is not a link peer")
            if link_id not in link_ids or link_ids[link_id].peer_relay != next_hop:
                raise ConfigError(f"{self.relay_id}: link {link_id} does not reach {next_hop}")
        for sae in self.local_sae_ids:
            owner = self.sae_directory.get(sae, self.relay_id)
            if owner != self.relay_id:
                raise ConfigError(f"{self.relay_id}: SAE {sae} is local but the directory maps it to {owner}")
