"""Running networks: every component in one process, or one process per service.

Both handles expose the same surface (``sae``, ``ensure_keys``, ``relay_state``,
``records``, ``health``, ``close``) so the drivers do not care which one they
hold.  Link pools run on a virtual clock that the handle advances on demand.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..errors import ConfigError, PortConflictError, StartupError, ZtqrError
from ..etsi014 import Etsi014Client, KmeKeyService
from ..httpcommon import JsonClient
from ..kme import Kme, KeyPool, make_link
from ..metrics import BenchRecord, Recorder
from ..qrng import SeededSource
from ..registry import MemoryRegistry
from ..relay import InProcessTransport, Relay
from .topology import TopologyConfig, component_seed

log = logging.getLogger(__name__)

IN_PROCESS = "in-process"
MULTI_PROCESS = "multi-process"
DEPLOYMENTS = (IN_PROCESS, MULTI_PROCESS)


def build_links(topo: TopologyConfig) -> tuple[dict[str, KeyPool], dict[str, Kme]]:
    pools: dict[str, KeyPool] = {}
    kmes: dict[str, Kme] = {}
    for ln in topo.links:
        src = SeededSource(component_seed(topo.seed, f"link:{ln.link_id}"))
        pool, ka, kb = make_link(ln.params, ln.ends[0], ln.ends[1], ln.kmes[0], ln.kmes[1], src)
        pools[ln.link_id] = pool
        kmes[ka.kme_id], kmes[kb.kme_id] = ka, kb
    return pools, kmes


def seconds_until(pools: dict[str, KeyPool], number: int) -> float:
    """Virtual time after which every pool holds at least ``number`` keys."""
    worst = 0.0
    for pool in pools.values():
        need = min(number, pool.params.pool_capacity) - pool.available_count
        if need > 0:
            bits = need * pool.params.key_size_bits - pool._credit_bits
            worst = max(worst, bits / pool.params.key_rate_bps)
    return worst


def ensure_available(pools: dict[str, KeyPool], number: int) -> float:
    dt = seconds_until(pools, number)
    total = 0.0
    while dt > 0:
        step = dt * (1 + 1e-9) + 1e-9
        for pool in pools.values():
            pool.replenish(step)
        total += step
        dt = seconds_until(pools, number)
    return total


class _LocalSae:
    """An SAE talking to its relay by direct call."""

    def __init__(self, relay: Relay, sae_id: str) -> None:
        self.relay, self.sae_id = relay, sae_id

    def status(self, slave_sae_id: str) -> dict[str, Any]:
        return self.relay.status(slave_sae_id, self.sae_id)

    def enc_keys(self, slave_sae_id: str, number: int = 1, size: int | None = None) -> dict[str, Any]:
        return self.relay.enc_keys(slave_sae_id, number, size, self.sae_id)

    def dec_keys(self, master_sae_id: str, key_ids: list[str]) -> dict[str, Any]:
        return self.relay.dec_keys(master_sae_id, key_ids, self.sae_id)


@dataclass
class InProcessNetwork:
    topology: TopologyConfig
    pools: dict[str, KeyPool]
    kmes: dict[str, Kme]
    relays: dict[str, Relay]
    registry: Any
    transport: InProcessTransport
    recorder: Recorder
    deployment: str = IN_PROCESS
    clock: float = 0.0

    def advance(self, seconds: float) -> None:
        for pool in self.pools.values():
            pool.replenish(seconds)
        self.clock += seconds

    def ensure_keys(self, number: int = 1) -> None:
        self.clock += ensure_available(self.pools, number)

    def sae(self, sae_id: str) -> _LocalSae:
        relay_id = self.topology.sae_directory.get(sae_id)
        if relay_id is None:
            raise ConfigError(f"topology has no SAE {sae_id!r}")
        return _LocalSae(self.relays[relay_id], sae_id)

    def relay_state(self, relay_id: str) -> dict[str, Any]:
        return self.relays[relay_id].state_summary()

    def records(self) -> list[BenchRecord]:
        return self.recorder.records

    def clear_records(self) -> None:
        self.recorder.clear()

    def health(self) -> dict[str, bool]:
        status = {f"relay:{rid}": r.running for rid, r in self.relays.items()}
        status.update({f"kme:{k}": True for k in self.kmes})
        status["registry"] = self.registry is not None
        return status

    def close(self) -> None:
        for r in self.relays.values():
            r.running = False


def up_in_process(topo: TopologyConfig, *, registry: Any = None, recorder: Recorder | None = None,
                  test_hooks: bool = False, state_root: Path | None = None) -> InProcessNetwork:
    pools, kmes = build_links(topo)
    registry = registry if registry is not None else MemoryRegistry()
    transport = InProcessTransport()
    recorder = recorder or Recorder()
    relays: dict[str, Relay] = {}
    for cfg in topo.relays:
        cfg.test_hooks = test_hooks
        if state_root is not None:
            cfg.state_dir = state_root / cfg.relay_id
        clients = {ln.link_id: KmeKeyService(kmes[ln.kme_id]) for ln in cfg.links}
        relay = Relay(cfg, kmes=clients, registry=registry, transport=transport, recorder=recorder)
        transport.register(cfg.relay_id, relay)
        relays[cfg.relay_id] = relay
    for relay in relays.values():
        relay.startup()
    return InProcessNetwork(topo, pools, kmes, relays, registry, transport, recorder)


# ---------------------------------------------------------------------- multi-process

def port_in_use(host: str, port: int) -> bool:
    # bind the way uvicorn does, so sockets lingering in TIME_WAIT do not count as busy
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            s.bind((host, port))
        except OSError:
            return True
    return False


@dataclass
class MultiProcessNetwork:
    topology: TopologyConfig
    host: str
    ports: dict[str, int]
    procs: dict[str, subprocess.Popen] = field(default_factory=dict)
    workdir: Path | None = None
    deployment: str = MULTI_PROCESS
    _tmp: Any = None

    def url(self, component: str) -> str:
        return f"http://{self.host}:{self.ports[component]}"

    def _kme_host(self) -> JsonClient:
        return JsonClient(self.url("kme-host"))

    def advance(self, seconds: float) -> None:
        self._kme_host().request("POST", "/sim/advance", {"seconds": seconds})

    def ensure_keys(self, number: int = 1) -> None:
        self._kme_host().request("POST", "/sim/ensure", {"number": number})

    def sae(self, sae_id: str) -> Etsi014Client:
        relay_id = self.topology.sae_directory.get(sae_id)
        if relay_id is None:
            raise ConfigError(f"topology has no SAE {sae_id!r}")
        return Etsi014Client(self.url(f"relay:{relay_id}"), sae_id=sae_id, timeout=300.0)

    def relay_state(self, relay_id: str) -> dict[str, Any]:
        return JsonClient(self.url(f"relay:{relay_id}")).request("GET", "/admin/state")

    def records(self) -> list[BenchRecord]:
        out = []
        for rid in self.topology.relay_ids:
            rows = JsonClient(self.url(f"relay:{rid}")).request("GET", "/admin/metrics")
            out.extend(BenchRecord(**r) for r in rows)
        return out

    def clear_records(self) -> None:
        for rid in self.topology.relay_ids:
            JsonClient(self.url(f"relay:{rid}")).request("DELETE", "/admin/metrics")

    def health(self) -> dict[str, bool]:
        out = {}
        for comp in self.ports:
            try:
                JsonClient(self.url(comp), timeout=2.0).request("GET", "/health")
                out[comp] = True
            except ZtqrError:
                out[comp] = False
        return out

    def close(self) -> None:
        for proc in self.procs.values():
            if proc.poll() is None:
                proc.terminate()
        for proc in self.procs.values():
            try:
                proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
        if self._tmp is not None:
            self._tmp.cleanup()

    def __enter__(self) -> MultiProcessNetwork:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def plan_ports(topo: TopologyConfig, base_port: int) -> dict[str, int]:
    comps = ["registry", "kme-host"] + [f"relay:{rid}" for rid in topo.relay_ids]
    return {c: base_port + i for i, c in enumerate(comps)}


def up_multi_process(topo: TopologyConfig, *, base_port: int = 18400, host: str = "127.0.0.1",
                     workdir: Path | None = None, startup_timeout: float = 60.0,
                     test_hooks: bool = False) -> MultiProcessNetwork:
    """Start the registry, one KME host and one process per relay.

    All ports are checked before anything is launched.
    """
    ports = plan_ports(topo, base_port)
    busy = [f"{c}={p}" for c, p in ports.items() if port_in_use(host, p)]
    if busy:
        raise PortConflictError(f"ports already in use: {', '.join(busy)}")
    tmp = None
    if workdir is None:
        tmp = tempfile.TemporaryDirectory(prefix="ztqr-net-")
        workdir = Path(tmp.name)
    workdir.mkdir(parents=True, exist_ok=True)
    topo_file = topo.dump(workdir / "topology.yaml")
    net = MultiProcessNetwork(topo, host, ports, workdir=workdir, _tmp=tmp)
    base = [sys.executable, "-m", "ztqr.cli", "--topology", str(topo_file)]
    peers = {rid: net.url(f"relay:{rid}") for rid in topo.relay_ids}
    cmds = {
        "registry": base + ["registry", "serve", "--dir", str(workdir / "registry"),
                            "--host", host, "--port", str(ports["registry"])],
        "kme-host": base + ["serve-kme", "--host", host, "--port", str(ports["kme-host"])],
    }
    for rid in topo.relay_ids:
        cmd = base + ["serve-relay", "--relay-id", rid, "--host", host,
                      "--port", str(ports[f"relay:{rid}"]), "--registry", net.url("registry"),
                      "--kme-host", net.url("kme-host"), "--peers", json.dumps(peers),
                      "--state-dir", str(workdir / "state" / rid)]
        if test_hooks:
            cmd.append("--test-hooks")
        cmds[f"relay:{rid}"] = cmd
    logdir = workdir / "logs"
    logdir.mkdir(exist_ok=True)
    env = dict(os.environ)
    order = ["registry", "kme-host"] + [c for c in cmds if c.startswith("relay:")]
    try:
        for comp in order:
            if comp.startswith("relay:") and "kme-host" in net.procs:
                _wait_healthy(net, ["registry", "kme-host"], startup_timeout)
            logf = open(logdir / f"{comp.replace(':', '_')}.log", "wb")
            net.procs[comp] = subprocess.Popen(cmds[comp], stdout=logf, stderr=subprocess.STDOUT, env=env)
        _wait_healthy(net, list(ports), startup_timeout)
    except BaseException:
        net.close()
        raise
    return net


def _wait_healthy(net: MultiProcessNetwork, comps: list[str], timeout: float) -> None:
    deadline = time.monotonic() + timeout
    pending = set(comps)
    while pending:
        for comp in list(pending):
            proc = net.procs.get(comp)
            if proc is not None and proc.poll() is not None:
                logfile = net.workdir / "logs" / f"{comp.replace(':', '_')}.log"
                tail = logfile.read_text(errors="replace")[-2000:] if logfile.exists() else ""
                raise StartupError(f"{comp} exited with status {proc.returncode}:\n{tail}")
            try:
                JsonClient(net.url(comp), timeout=1.0).request("GET", "/health")
                pending.discard(comp)
            except ZtqrError:
                pass
        if pending:
            if time.monotonic() > deadline:
                raise StartupError(f"components not healthy after {timeout:.0f}s: {sorted(pending)}")
            time.sleep(0.2)


def up(topo: TopologyConfig, deployment: str = IN_PROCESS, **kw: Any):
    if deployment == IN_PROCESS:
        return up_in_process(topo, **kw)
    if deployment == MULTI_PROCESS:
        return up_multi_process(topo, **kw)
    raise ConfigError(f"deployment must be one of {DEPLOYMENTS}")


__all__ = ["DEPLOYMENTS", "IN_PROCESS", "MULTI_PROCESS", "InProcessNetwork", "MultiProcessNetwork",
           "build_links", "ensure_available", "up", "up_in_process", "up_multi_process"]
