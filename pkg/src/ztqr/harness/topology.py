"""Topology documents: zones, links and relays, loaded from YAML or built in code."""

from __future__ import annotations

import hashlib
import ipaddress
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import networkx as nx
import yaml

from ..errors import ConfigError
from ..fhe import PROFILES
from ..kme import LinkParams
from ..relay.config import MODES, ZERO_TRUST, RelayConfig, RelayLink

DEFAULT_TOPOLOGY = "testbed.yaml"


@dataclass(frozen=True)
class ZoneSpec:
    name: str
    cidr: str
    relay: str
    saes: tuple[str, ...] = ()


@dataclass(frozen=True)
class LinkSpec:
    params: LinkParams
    ends: tuple[str, str]
    kmes: tuple[str, str]
    segment: str = ""

    @property
    def link_id(self) -> str:
        return self.params.link_id

    def kme_for(self, relay_id: str) -> str:
        return self.kmes[self.ends.index(relay_id)]

    def peer_of(self, relay_id: str) -> str:
        return self.ends[1 - self.ends.index(relay_id)]


@dataclass
class TopologyConfig:
    zones: list[ZoneSpec]
    links: list[LinkSpec]
    relays: list[RelayConfig]
    seed: int = 0
    profile: str = "desk"
    mode: str = ZERO_TRUST
    wan_segment: str = ""
    source: Path | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        self.validate()

    # lookups
    def relay(self, relay_id: str) -> RelayConfig:
        for r in self.relays:
            if r.relay_id == relay_id:
                return r
        raise ConfigError(f"topology has no relay {relay_id!r}")

    def link(self, link_id: str) -> LinkSpec:
        for ln in self.links:
            if ln.link_id == link_id:
                return ln
        raise ConfigError(f"topology has no link {link_id!r}")

    @property
    def relay_ids(self) -> list[str]:
        return [r.relay_id for r in self.relays]

    @property
    def sae_directory(self) -> dict[str, str]:
        return {sae: z.relay for z in self.zones for sae in z.saes}

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.relay_ids)
        for ln in self.links:
            g.add_edge(*ln.ends, link_id=ln.link_id)
        return g

    def path(self, src: str, dst: str) -> list[str]:
        """Relays visited by the configured static routes from ``src`` to ``dst``."""
        hops = [src]
        while hops[-1] != dst:
            nxt = self.relay(hops[-1]).routing.get(dst)
            if nxt is None or nxt[0] in hops:
                raise ConfigError(f"static routes do not lead from {src} to {dst}")
            hops.append(nxt[0])
        return hops

    def validate(self) -> None:
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        ids = self.relay_ids
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate relay ids")
        link_ids = [ln.link_id for ln in self.links]
        if len(set(link_ids)) != len(link_ids):
            raise ConfigError("duplicate link ids")
        for ln in self.links:
            for end in ln.ends:
                if end not in ids:
                    raise ConfigError(f"link {ln.link_id} names unknown relay {end!r}")
            if ln.ends[0] == ln.ends[1]:
                raise ConfigError(f"link {ln.link_id} loops back to {ln.ends[0]}")
        kmes = [k for ln in self.links for k in ln.kmes]
        if len(set(kmes)) != len(kmes):
            raise ConfigError("duplicate KME ids")
        saes = [s for z in self.zones for s in z.saes]
        if len(set(saes)) != len(saes):
            raise ConfigError("an SAE appears in more than one zone")
        for z in self.zones:
            if z.relay not in ids:
                raise ConfigError(f"zone {z.name} is served by unknown relay {z.relay!r}")
            _check_cidr(z.cidr, z.name)
        for ln in self.links:
            if ln.segment:
                _check_cidr(ln.segment, ln.link_id)
        if ids and not nx.is_connected(self.graph()):
            raise ConfigError("relay graph is not connected")
        by_id = {ln.link_id: ln for ln in self.links}
        for r in self.relays:
            for rl in r.links:
                spec = by_id.get(rl.link_id)
                if spec is None or r.relay_id not in spec.ends or spec.peer_of(r.relay_id) != rl.peer_relay:
                    raise ConfigError(f"{r.relay_id}: link {rl.link_id} does not exist as configured")
            missing = [d for d in ids if d != r.relay_id and d not in r.routing]
            if missing:
                raise ConfigError(f"{r.relay_id}: no route to {', '.join(missing)}")
        for src in ids:
            for dst in ids:
                if src != dst:
                    self.path(src, dst)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed, "profile": self.profile, "mode": self.mode, "wan_segment": self.wan_segment,
            "zones": [{"name": z.name, "cidr": z.cidr, "relay": z.relay, "saes": list(z.saes)}
                      for z in self.zones],
            "links": [{"link_id": ln.link_id, "segment": ln.segment, "ends": list(ln.ends),
                       "kmes": list(ln.kmes), "key_rate_bps": ln.params.key_rate_bps,
                       "qber": ln.params.qber, "key_size_bits": ln.params.key_size_bits,
                       "pool_capacity": ln.params.pool_capacity} for ln in self.links],
            "relays": [{"relay_id": r.relay_id, "zone": r.zone,
                        "routing": {d: list(v) for d, v in r.routing.items()}} for r in self.relays],
        }

    def dump(self, path: Path) -> Path:
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
        return path


def _check_cidr(cidr: str, what: str) -> None:
    try:
        ipaddress.ip_network(cidr)
    except ValueError as exc:
        raise ConfigError(f"{what}: bad CIDR {cidr!r}") from exc


def component_seed(seed: int, component: str) -> int:
    """Independent 63-bit seed for one named component of a run."""
    digest = hashlib.sha256(f"ztqr-seed/1:{seed}:{component}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def from_dict(doc: dict[str, Any], source: Path | None = None) -> TopologyConfig:
    if not isinstance(doc, dict):
        raise ConfigError("topology document must be a mapping")
    try:
        seed = int(doc.get("seed", 0))
        profile = doc.get("profile", "desk")
        mode = doc.get("mode", ZERO_TRUST)
        zones = [ZoneSpec(z["name"], z["cidr"], z["relay"], tuple(z.get("saes") or ()))
                 for z in doc["zones"]]
        links = []
        for ln in doc["links"]:
            params = LinkParams(ln["link_id"], float(ln.get("key_rate_bps", 2048)), float(ln.get("qber", 0.0)),
                                int(ln.get("key_size_bits", 256)), int(ln.get("pool_capacity", 4096)))
            links.append(LinkSpec(params, tuple(ln["ends"]), tuple(ln["kmes"]), ln.get("segment", "")))
        relay_docs = doc["relays"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed topology document: {exc!r}") from exc
    for ln in links:
        if len(ln.ends) != 2 or len(ln.kmes) != 2:
            raise ConfigError(f"link {ln.link_id} needs exactly two ends and two KMEs")

    directory = {sae: z.relay for z in zones for sae in z.saes}
    zone_of = {z.relay: z for z in zones}
    relays = []
    for rd in relay_docs:
        rid = rd["relay_id"]
        own = [ln for ln in links if rid in ln.ends]
        rlinks = [RelayLink(ln.link_id, ln.kme_for(rid), f"inproc://{ln.kme_for(rid)}", ln.peer_of(rid))
                  for ln in own]
        routing = {d: tuple(v) for d, v in (rd.get("routing") or {}).items()}
        zone = rd.get("zone") or (zone_of[rid].name if rid in zone_of else "")
        relays.append(RelayConfig(
            relay_id=rid, zone=zone,
            local_sae_ids=list(zone_of[rid].saes) if rid in zone_of else [],
            links=rlinks, routing=routing, fhe_profile=profile, mode=mode, sae_directory=directory,
            qrng={"kind": "seeded-deterministic", "seed": component_seed(seed, f"qrng:{rid}")},
            fhe_seed=component_seed(seed, f"fhe:{rid}"),
        ))
    return TopologyConfig(zones, links, relays, seed, profile, mode, doc.get("wan_segment", ""), source)


def load_topology(path: str | Path | None = None) -> TopologyConfig:
    """Load a topology file; ``None`` gives the bundled five-relay testbed."""
    if path is None:
        text = resources.files("ztqr.data").joinpath(DEFAULT_TOPOLOGY).read_text()
        src = None
    else:
        src = Path(path)
        try:
            text = src.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read topology {src}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"topology is not valid YAML: {exc}") from exc
    return from_dict(doc, src)


def linear_topology(hops: int, *, seed: int = 0, profile: str = "desk", mode: str = ZERO_TRUST,
                    key_rate_bps: float = 2048.0) -> TopologyConfig:
    """A chain of ``hops`` links (``hops + 1`` relays), SAE-A at the head and SAE-B at the tail."""
    if hops < 1:
        raise ConfigError("a chain needs at least one link")
    rids = [f"R{i + 1}" for i in range(hops + 1)]
    doc: dict[str, Any] = {
        "seed": seed, "profile": profile, "mode": mode,
        "zones": [{"name": f"zone-{i + 1}", "cidr": f"10.2.{i + 1}.0/27", "relay": rid,
                   "saes": ["SAE-A"] if i == 0 else ["SAE-B"] if i == hops else []}
                  for i, rid in enumerate(rids)],
        "links": [{"link_id": f"l{i + 1}", "ends": [rids[i], rids[i + 1]],
                   "kmes": [f"kme-l{i + 1}a", f"kme-l{i + 1}b"], "key_rate_bps": key_rate_bps}
                  for i in range(hops)],
        "relays": [],
    }
    for i, rid in enumerate(rids):
        routing = {}
        for j, dst in enumerate(rids):
            if j > i:
                routing[dst] = [rids[i + 1], f"l{i + 1}"]
            elif j < i:
                routing[dst] = [rids[i - 1], f"l{i}"]
        doc["relays"].append({"relay_id": rid, "routing": routing})
    return from_dict(doc)


def with_overrides(topo: TopologyConfig, *, seed: int | None = None, profile: str | None = None,
                   mode: str | None = None) -> TopologyConfig:
    doc = topo.to_dict()
    if seed is not None:
        doc["seed"] = seed
    if profile is not None:
        doc["profile"] = profile
    if mode is not None:
        doc["mode"] = mode
    return from_dict(doc, topo.source)
