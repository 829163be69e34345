"""Real processes over loopback HTTP: registry, one KME host, five relays."""

import socket

import pytest

from ztqr.errors import ConflictError, PortConflictError
from ztqr.harness import exchange, load_topology
from ztqr.harness.network import plan_ports, up_multi_process

BASE = 18740

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def net(tmp_path_factory):
    n = up_multi_process(load_topology(), base_port=BASE, workdir=tmp_path_factory.mktemp("mp"))
    yield n
    n.close()


def test_all_components_healthy(net):
    health = net.health()
    assert len(health) == 7 and all(health.values())


def test_exchange_over_http(net):
    rep = exchange(net, "SAE-A", "SAE-B", 256, 3)
    assert rep.all_equal and rep.voids_complete
    for rid in net.topology.relay_ids:
        assert net.relay_state(rid)["active_key_ids"] == []


def test_records_collected_across_processes(net):
    net.clear_records()
    exchange(net, "SAE-B", "SAE-A", 128, 1)
    kinds = sorted(r.op_kind for r in net.records())
    assert kinds == sorted(["initial-xor"] + ["undo-xor", "redo-xor"] * 3 + ["final-undo"])


def test_remote_errors_keep_their_type(net):
    net.ensure_keys(1)
    issued = net.sae("SAE-A").enc_keys("SAE-B", 1, 256)["keys"]
    bob = net.sae("SAE-B")
    bob.dec_keys("SAE-A", [issued[0]["key_ID"]])
    with pytest.raises(ConflictError):
        bob.dec_keys("SAE-A", [issued[0]["key_ID"]])


def test_port_conflict_detected_before_launch(net):
    # the running network already owns these ports
    with pytest.raises(PortConflictError) as ei:
        up_multi_process(load_topology(), base_port=BASE)
    assert "registry" in ei.value.message


def test_single_busy_port_named(tmp_path):
    ports = plan_ports(load_topology(), BASE + 20)
    with socket.socket() as s:
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind(("127.0.0.1", ports["relay:ZTQR3"]))
        s.listen()
        with pytest.raises(PortConflictError) as ei:
            up_multi_process(load_topology(), base_port=BASE + 20, workdir=tmp_path)
    assert ei.value.message.endswith(f"relay:ZTQR3={ports['relay:ZTQR3']}")
    assert not (tmp_path / "topology.yaml").exists()
