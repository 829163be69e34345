import base64
import logging
import stat
from collections import Counter

import numpy as np
import pytest
from fastapi.testclient import TestClient

from ztqr import audit
from ztqr.errors import (BadRequestError, ConflictError, CorruptKeyError, DecodeError,
                         DependencyError, EntropyDepletedError, HookDisabledError, IncompatibleContextError,
                         KeyShortageError,
                         NotFoundError, RegistryUnreachableError, UnroutableError)
from ztqr.etsi014 import SAE_HEADER
from ztqr.fhe import RingParams, decrypt, find_ntt_prime, keygen
from ztqr.gf2 import BitKey, decode
from ztqr.harness import linear_topology, load_topology, up_in_process, with_overrides
from ztqr.harness.topology import from_dict
from ztqr.qrng import FileFedSource
from ztqr.relay import DELIVERED, TRANSPORTED, VOIDED
from ztqr.relay.node import SECRET_KEY_FILE, write_keypair
from ztqr.relay.service import create_relay_app
from ztqr.wire import ExtKeysMessage, VoidMessage


@pytest.fixture
def net():
    return up_in_process(load_topology())


def issue(net, bits=256, number=1):
    net.ensure_keys(number)
    return net.sae("SAE-A").enc_keys("SAE-B", number, bits)["keys"]


def fetch(net, items):
    return net.sae("SAE-B").dec_keys("SAE-A", [k["key_ID"] for k in items])["keys"]


# ---------------------------------------------------------------- lifecycle

def test_startup_is_idempotent(net):
    r = net.relays["ZTQR3"]
    digest = r.registry_digest
    r.startup()
    assert r.registry_digest == digest
    assert net.registry.fetch("ZTQR3").content_digest == digest


def test_baseline_startup_warns_and_skips_registry(caplog):
    with caplog.at_level(logging.WARNING):
        bnet = up_in_process(with_overrides(load_topology(), mode="plaintext-baseline"))
    assert "plaintext-baseline" in caplog.text
    assert bnet.registry.relay_ids() == []


class DeadRegistry:
    def publish(self, *a):
        raise ConnectionRefusedError("nobody home")

    def fetch(self, *a):
        raise ConnectionRefusedError("nobody home")


def test_unreachable_registry_fails_startup():
    with pytest.raises(RegistryUnreachableError):
        up_in_process(load_topology(), registry=DeadRegistry())


def test_keys_persist_and_reload(tmp_path):
    first = up_in_process(load_topology(), state_root=tmp_path)
    d1 = first.relays["ZTQR1"].registry_digest
    sk_file = tmp_path / "ZTQR1" / SECRET_KEY_FILE
    assert stat.S_IMODE(sk_file.stat().st_mode) == 0o600
    again = up_in_process(load_topology(), state_root=tmp_path)
    assert again.relays["ZTQR1"].registry_digest == d1


def test_corrupt_persisted_key_refused(tmp_path, desk):
    _, pk = keygen(desk, np.random.default_rng(1))
    sk_other, _ = keygen(desk, np.random.default_rng(2))
    write_keypair(tmp_path / "ZTQR1", desk, sk_other, pk)
    with pytest.raises(CorruptKeyError):
        up_in_process(load_topology(), state_root=tmp_path)
    (tmp_path / "ZTQR1" / SECRET_KEY_FILE).write_bytes(b"garbage")
    with pytest.raises(CorruptKeyError):
        up_in_process(load_topology(), state_root=tmp_path)


# ---------------------------------------------------------------- routing

def test_route_next_hop(net):
    r1 = net.relays["ZTQR1"]
    assert r1.route_next_hop("ZTQR5") == ("ZTQR2", "a1-b1")
    assert net.relays["ZTQR3"].route_next_hop("ZTQR1") == ("ZTQR2", "a2-b2")
    with pytest.raises(UnroutableError):
        r1.route_next_hop("ZTQR1")
    with pytest.raises(UnroutableError):
        r1.route_next_hop("ZTQR9")


def test_zero_hop_exchange():
    doc = linear_topology(1).to_dict()
    doc["zones"][0]["saes"].append("SAE-C")
    znet = up_in_process(from_dict(doc))
    items = znet.sae("SAE-A").enc_keys("SAE-C", 2, 128)["keys"]
    got = znet.sae("SAE-C").dec_keys("SAE-A", [k["key_ID"] for k in items])["keys"]
    assert got == items
    assert znet.records() == []


# ---------------------------------------------------------------- northbound

def test_status_reports_link_pool(net):
    net.advance(1.0)
    st = net.sae("SAE-A").status("SAE-B")
    assert st["source_KME_ID"] == "ZTQR1" and st["target_KME_ID"] == "ZTQR5"
    assert st["stored_key_count"] == 8
    with pytest.raises(NotFoundError):
        net.sae("SAE-A").status("SAE-Z")


def test_request_validation(net):
    alice = net.sae("SAE-A")
    for kw in (dict(number=0), dict(number=129), dict(size=100), dict(size=512)):
        with pytest.raises(BadRequestError):
            alice.enc_keys("SAE-B", kw.get("number", 1), kw.get("size", 256))
    with pytest.raises(NotFoundError):
        alice.enc_keys("SAE-Z")
    with pytest.raises(NotFoundError):
        net.relays["ZTQR1"].enc_keys("SAE-B", caller="SAE-B")


def test_partial_shortage_issues_nothing(net):
    net.advance(0.125)
    before = {k: p.snapshot() for k, p in net.pools.items()}
    with pytest.raises(KeyShortageError):
        net.sae("SAE-A").enc_keys("SAE-B", 2)
    assert {k: p.snapshot() for k, p in net.pools.items()} == before
    assert net.relays["ZTQR1"].pool_entries() == []


def test_multi_key_request(net):
    items = issue(net, 128, number=3)
    assert len({k["key_ID"] for k in items}) == 3
    assert fetch(net, items) == items


def test_dec_keys_errors(net):
    items = issue(net)
    bob = net.sae("SAE-B")
    with pytest.raises(NotFoundError):
        bob.dec_keys("SAE-A", ["00000000-0000-4000-8000-000000000000"])
    with pytest.raises(BadRequestError):
        bob.dec_keys("SAE-A", [])
    fetch(net, items)
    with pytest.raises(ConflictError):
        fetch(net, items)


def test_dec_keys_is_atomic(net):
    items = issue(net, number=2)
    fetch(net, items[:1])
    with pytest.raises(ConflictError):
        fetch(net, items)
    got = fetch(net, items[1:])
    assert got == items[1:]


def test_delivery_closes_every_hop(net):
    items = issue(net)
    kid = items[0]["key_ID"]
    term = {e.key_ID: e.state for e in net.relays["ZTQR5"].pool_entries()}
    assert term[kid] == TRANSPORTED
    assert kid in net.relays["ZTQR3"].active_key_ids()
    fetch(net, items)
    for rid, r in net.relays.items():
        assert r.active_key_ids() == set(), rid
        (rec,) = r.transit_records()
        assert rec.close_reason == "delivered"
    assert {e.key_ID: e.state for e in net.relays["ZTQR1"].pool_entries()}[kid] == DELIVERED


def test_void_idempotence(net):
    items = issue(net)
    fetch(net, items)
    r3 = net.relays["ZTQR3"]
    ex = r3.transit_records()[0].exchange_id
    v = VoidMessage(ex, items[0]["key_ID"], "delivered", "ZTQR4")
    assert r3.handle_void(v) == {"status": "duplicate"}
    assert r3.handle_void(VoidMessage("nope", "k", "expired")) == {"status": "dropped"}


def test_expired_void_travels_both_ways(net):
    items = issue(net)
    ex = net.relays["ZTQR3"].transit_records()[0].exchange_id
    out = net.relays["ZTQR3"].handle_void(VoidMessage(ex, items[0]["key_ID"], "expired", ""))
    assert sorted(out["forwarded_to"]) == ["ZTQR2", "ZTQR4"]
    assert {e.state for e in net.relays["ZTQR5"].pool_entries()} == {VOIDED}
    assert {e.state for e in net.relays["ZTQR1"].pool_entries()} == {VOIDED}
    with pytest.raises(ConflictError):
        fetch(net, items)


# ---------------------------------------------------------------- east-west failure handling

def test_tampered_payload_rejected_without_state_change(net):
    def corrupt(kind, peer, body):
        if kind == "ext_keys" and peer == "ZTQR3":
            body["payload"] = "*" + body["payload"][1:]

    net.transport.observers.append(corrupt)
    net.ensure_keys(1)
    a2 = net.pools["a2-b2"].snapshot()
    with pytest.raises(DecodeError) as ei:
        net.sae("SAE-A").enc_keys("SAE-B")
    assert ei.value.stage == "base64"
    assert ei.value.relay_id == "ZTQR3" and ei.value.exchange_id
    assert net.relays["ZTQR3"].transit_records() == []
    # the a2-b2 link key reserved by ZTQR2 was never redeemed by ZTQR3
    (rec,) = net.relays["ZTQR2"].transit_records()
    assert a2 != net.pools["a2-b2"].snapshot()
    assert net.pools["a2-b2"].entries[rec.hop_link_key_IDs[1]].state != "consumed"
    assert {e.state for e in net.relays["ZTQR1"].pool_entries()} == {VOIDED}


def test_replayed_envelope_rejected(net):
    seen = []
    net.transport.observers.append(lambda k, p, b: seen.append((k, p, dict(b))))
    fetch(net, issue(net))
    kind, peer, body = next(s for s in seen if s[0] == "ext_keys" and s[1] == "ZTQR4")
    with pytest.raises(ConflictError):
        net.relays["ZTQR4"].receive_ext_keys(body)


def test_wrong_context_rejected(net):
    seen = []
    net.transport.observers.append(lambda k, p, b: seen.append((k, p, dict(b))))
    issue(net)
    body = next(b for k, p, b in seen if p == "ZTQR4")
    body["exchange_id"] = "fresh"
    # ZTQR4 believes the destination uses a different ring
    other = RingParams(n=1024, q=find_ntt_prime(50, 1024))
    net.relays["ZTQR4"]._dest_keys["ZTQR5"] = keygen(other, np.random.default_rng(3))[1]
    a3 = net.pools["a3-b3"].snapshot()
    with pytest.raises(IncompatibleContextError):
        net.relays["ZTQR4"].receive_ext_keys(body)
    assert net.pools["a3-b3"].snapshot() == a3


def test_mode_mismatch_rejected(net):
    seen = []
    net.transport.observers.append(lambda k, p, b: seen.append((k, p, dict(b))))
    issue(net)
    body = next(b for k, p, b in seen if p == "ZTQR2")
    body.update(exchange_id="other", encoding="otp-base64")
    with pytest.raises(BadRequestError):
        net.relays["ZTQR2"].receive_ext_keys(body)


def test_unreachable_next_hop_voids_origin(net):
    del net.transport.peers["ZTQR4"]
    with pytest.raises(DependencyError) as ei:
        issue(net)
    assert ei.value.relay_id == "ZTQR4"
    assert {e.state for e in net.relays["ZTQR1"].pool_entries()} == {VOIDED}
    assert net.relays["ZTQR3"].transit_records()[0].close_reason == "error"


def test_qrng_exhaustion_surfaces(net, tmp_path):
    f = tmp_path / "e.bin"
    f.write_bytes(b"\x00" * 32)
    net.relays["ZTQR1"].swap_qrng(FileFedSource(f))
    issue(net)
    with pytest.raises(EntropyDepletedError):
        issue(net)


def test_tamper_hook_needs_test_hooks(net):
    with pytest.raises(HookDisabledError):
        net.relays["ZTQR3"].install_tamper(lambda ct, pk: ct)


# ---------------------------------------------------------------- confidentiality

def test_forwarders_never_build_the_consumer_key(net):
    with audit.observe_bitkeys() as seen:
        fetch(net, issue(net))
    for rid in ("ZTQR2", "ZTQR3", "ZTQR4"):
        assert {o for r, o in seen if r == rid} == {"qkd-link"}, rid
    assert ("ZTQR1", "qrng") in seen


def test_baseline_forwarders_do_see_the_key():
    bnet = up_in_process(with_overrides(load_topology(), mode="plaintext-baseline"))
    with audit.observe_bitkeys() as seen:
        fetch(bnet, issue(bnet))
    assert ("ZTQR3", "recovered") in seen


def test_every_hop_is_one_time_padded():
    lnet = up_in_process(linear_topology(3))
    bodies = []
    lnet.transport.observers.append(lambda k, p, b: k == "ext_keys" and bodies.append(b))
    items = issue(lnet)
    fetch(lnet, items)
    k_issued = BitKey.from_bytes(base64.b64decode(items[0]["key"]), 256)
    sk_dest = lnet.relays["R4"].sk
    assert len(bodies) == 3
    for body in bodies:
        msg = ExtKeysMessage.from_json(body)
        inner = decode(decrypt(sk_dest, msg.ciphertext()), 256)
        pool = lnet.pools[msg.hop_link_id]
        link_key = pool.entries[msg.link_key_IDs[0]].served_key()
        assert inner != k_issued
        assert (inner ^ link_key).bits == k_issued.bits


def test_link_keys_single_use(net):
    for _ in range(3):
        fetch(net, issue(net))
    used = [kid for r in net.relays.values() for rec in r.transit_records() for kid in rec.hop_link_key_IDs]
    # each link key is seen by the two relays on that link, and by nobody else
    assert set(Counter(used).values()) == {2}
    assert len(set(used)) == 3 * 4


def test_transit_records_hold_no_secrets(net):
    fetch(net, issue(net))
    rec = net.relays["ZTQR3"].transit_records()[0]
    for value in vars(rec).values():
        assert not isinstance(value, (bytes, BitKey))
        assert not (isinstance(value, str) and len(value) > 64)


def test_baseline_and_zero_trust_deliver_same_keys():
    out = {}
    for mode in ("zero-trust", "plaintext-baseline"):
        n = up_in_process(with_overrides(load_topology(), mode=mode))
        out[mode] = [k["key"] for k in fetch(n, issue(n, number=2))]
    assert out["zero-trust"] == out["plaintext-baseline"]


def test_op_counts_per_exchange(net):
    fetch(net, issue(net))
    kinds = [r.op_kind for r in net.records()]
    assert kinds.count("initial-xor") == 1 and kinds.count("final-undo") == 1
    assert kinds.count("undo-xor") == kinds.count("redo-xor") == 3


# ---------------------------------------------------------------- HTTP face

def test_relay_http_service(net):
    net.ensure_keys(1)
    a = TestClient(create_relay_app(net.relays["ZTQR1"]))
    b = TestClient(create_relay_app(net.relays["ZTQR5"]))
    r = a.post("/api/v1/keys/SAE-B/enc_keys", json={"number": 1, "size": 256}, headers={SAE_HEADER: "SAE-A"})
    assert r.status_code == 200
    item = r.json()["keys"][0]
    r = b.post("/api/v1/keys/SAE-A/dec_keys", json={"key_IDs": [{"key_ID": item["key_ID"]}]},
               headers={SAE_HEADER: "SAE-B"})
    assert r.json()["keys"][0] == item
    again = b.post("/api/v1/keys/SAE-A/dec_keys", json={"key_IDs": [{"key_ID": item["key_ID"]}]})
    assert again.status_code == 409
    assert b.post("/api/v1/ext_keys", json={"junk": 1}).status_code == 400
    state = a.get("/admin/state").json()
    assert state["pool"][0]["state"] == DELIVERED and state["active_key_ids"] == []
    assert {m["op_kind"] for m in a.get("/admin/metrics").json()} >= {"initial-xor"}
    a.delete("/admin/metrics")
    assert a.get("/admin/metrics").json() == []
    assert b.post("/api/v1/void", json={"schema": "ztqr-void/1", "exchange_id": "x", "key_ID": "k",
                                        "reason": "expired"}).json() == {"status": "dropped"}
