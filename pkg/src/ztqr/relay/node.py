"""The zero-trust QKD relay.

Northbound the relay looks like a KME to its SAEs (ETSI-014 shapes).  East-west
it exchanges ``ext_keys`` and ``void`` envelopes with neighbouring relays.

In zero-trust mode the consumer key is only ever plaintext at the originating
relay (which draws it from its QRNG) and at the terminal relay (which
decrypts).  Forwarding relays work on ciphertexts under the destination's
public key and on their own QKD link keys.
"""

from __future__ import annotations

import base64
import logging
import os
import threading
import uuid
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Protocol

import numpy as np

from .. import audit
from ..errors import (BadRequestError, ConflictError, CorruptKeyError, DependencyError, HookDisabledError,
                      IncompatibleContextError, NotFoundError, RegistryUnreachableError,
                      SerializationError, UnroutableError, ZtqrError)
from ..fhe import (Ciphertext, PublicKey, RingParams, SecretKey, decrypt, deserialize_params,
                   deserialize_public_key, deserialize_secret_key, encrypt, gen_params, keygen,
                   keypair_residue, serialize_params, serialize_public_key, serialize_secret_key)
from ..gf2 import BitKey, decode, encode, hxor
from ..metrics import Recorder, timed
from ..qrng import QrngSlot, RandomSource, generate_key, make_source, swap_source
from ..wire import (ENCODING_BFV, ExtKeysMessage, VoidMessage, ext_keys_for_ciphertext,
                    ext_keys_for_otp)
from .config import PLAINTEXT_BASELINE, ZERO_TRUST, RelayConfig

log = logging.getLogger(__name__)

ISSUED, TRANSPORTED, DELIVERED, VOIDED = "issued-awaiting-transport", "transported", "delivered", "voided"
_STATE_ORDER = {ISSUED: 0, TRANSPORTED: 1, DELIVERED: 2, VOIDED: 3}
ACTIVE_STATES = (ISSUED, TRANSPORTED)

SECRET_KEY_FILE = "secret.key"
PUBLIC_KEY_FILE = "public.key"
PARAMS_FILE = "params.bin"


class KmeClient(Protocol):
    def status(self, slave_sae_id: str, caller: str | None = None) -> dict[str, Any]: ...
    def enc_keys(self, slave_sae_id: str, number: int = 1, size: int | None = None,
                 caller: str | None = None) -> dict[str, Any]: ...
    def dec_keys(self, master_sae_id: str, key_ids: list[str],
                 caller: str | None = None) -> dict[str, Any]: ...
    def void_keys(self, key_ids: list[str]) -> dict[str, Any]: ...


class Transport(Protocol):
    def send_ext_keys(self, peer: str, body: dict[str, Any]) -> dict[str, Any]: ...
    def send_void(self, peer: str, body: dict[str, Any]) -> dict[str, Any]: ...


@dataclass
class SaeKeyPoolEntry:
    key_ID: str
    key: BitKey
    initiator_sae: str
    target_sae: str
    state: str
    exchange_id: str

    def advance(self, state: str) -> None:
        if _STATE_ORDER[state] < _STATE_ORDER[self.state]:
            raise ConflictError(f"key {self.key_ID} cannot move from {self.state} to {state}")
        self.state = state


@dataclass
class InTransitRecord:
    """What a relay remembers about an exchange it touched; never key bits or ciphertexts."""

    exchange_id: str
    key_ID: str
    prev_hop_relay: str | None
    next_hop_relay: str | None
    hop_link_key_IDs: tuple[str, ...] = ()
    role: str = "forwarder"
    opened_at: float = 0.0
    closed_at: float | None = None
    close_reason: str | None = None

    @property
    def terminal(self) -> bool:
        return self.next_hop_relay is None

    @property
    def open(self) -> bool:
        return self.closed_at is None


def write_keypair(state_dir: Path, params: RingParams, sk: SecretKey, pk: PublicKey) -> None:
    state_dir.mkdir(parents=True, exist_ok=True)
    sk_path = state_dir / SECRET_KEY_FILE
    fd = os.open(sk_path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(serialize_secret_key(sk))
    os.chmod(sk_path, 0o600)
    (state_dir / PUBLIC_KEY_FILE).write_bytes(serialize_public_key(pk))
    (state_dir / PARAMS_FILE).write_bytes(serialize_params(params))


def keypair_matches(sk: SecretKey, pk: PublicKey) -> bool:
    """pk1 + pk2*s must be a small error polynomial."""
    try:
        return keypair_residue(sk, pk) <= sk.params.noise_bound
    except IncompatibleContextError:
        return False


def load_keypair(state_dir: Path) -> tuple[RingParams, SecretKey, PublicKey]:
    try:
        params = deserialize_params((state_dir / PARAMS_FILE).read_bytes())
        sk = deserialize_secret_key((state_dir / SECRET_KEY_FILE).read_bytes(), params)
        pk = deserialize_public_key((state_dir / PUBLIC_KEY_FILE).read_bytes(), params)
    except (OSError, SerializationError) as exc:
        raise CorruptKeyError(f"persisted relay keys in {state_dir} unusable: {exc}") from exc
    if not keypair_matches(sk, pk):
        raise CorruptKeyError(f"persisted secret key in {state_dir} does not match its public key")
    return params, sk, pk


def _key_from_container(item: dict[str, Any], size: int) -> BitKey:
    return BitKey.from_bytes(base64.b64decode(item["key"]), size, origin="qkd-link")


class Relay:
    def __init__(self, config: RelayConfig, *, kmes: dict[str, KmeClient], registry: Any,
                 transport: Transport, qrng: RandomSource | None = None,
                 recorder: Recorder | None = None, clock: Callable[[], float] | None = None) -> None:
        self.config = config
        self.relay_id = config.relay_id
        self.kmes = kmes
        self.registry = registry
        self.transport = transport
        self.qrng = QrngSlot(qrng or make_source(config.qrng))
        self.recorder = recorder
        self._clock = clock or (lambda: 0.0)
        self._links = {ln.link_id: ln for ln in config.links}
        self._pool: dict[str, SaeKeyPoolEntry] = {}
        self._transit: dict[str, InTransitRecord] = {}
        self._pool_lock = threading.Lock()
        self._transit_lock = threading.Lock()
        self._keys_lock = threading.Lock()
        self._seed_lock = threading.Lock()
        self._seedseq = np.random.SeedSequence(config.fhe_seed) if config.fhe_seed is not None else None
        self._dest_keys: dict[str, PublicKey] = {}
        self._tamper: Callable[[Ciphertext, PublicKey], Ciphertext] | None = None
        self.params: RingParams | None = None
        self.sk: SecretKey | None = None
        self.pk: PublicKey | None = None
        self.registry_digest: str | None = None
        self.running = False

    @property
    def mode(self) -> str:
        return self.config.mode

    # ------------------------------------------------------------------ lifecycle

    def startup(self) -> Relay:
        if self.mode == PLAINTEXT_BASELINE:
            log.warning("%s: plaintext-baseline mode; forwarded keys are visible to every relay",
                        self.relay_id)
            self.running = True
            return self
        if self.sk is None:
            self._load_or_generate_keys()
        try:
            rec = self.registry.publish(self.relay_id, serialize_public_key(self.pk),
                                        serialize_params(self.params))
        except ZtqrError as exc:
            if isinstance(exc, RegistryUnreachableError):
                raise
            raise RegistryUnreachableError(f"{self.relay_id}: cannot publish to registry: {exc}",
                                           relay_id=self.relay_id) from exc
        except OSError as exc:
            raise RegistryUnreachableError(f"{self.relay_id}: registry unreachable: {exc}",
                                           relay_id=self.relay_id) from exc
        self.registry_digest = rec.content_digest
        self.running = True
        return self

    def _new_rng(self) -> np.random.Generator:
        if self._seedseq is None:
            return np.random.default_rng()
        with self._seed_lock:
            return np.random.default_rng(self._seedseq.spawn(1)[0])

    def _load_or_generate_keys(self) -> None:
        state_dir = self.config.state_dir
        if state_dir is not None and (state_dir / SECRET_KEY_FILE).exists():
            params, sk, pk = load_keypair(state_dir)
            if params.security_profile != self.config.fhe_profile:
                raise CorruptKeyError(f"{self.relay_id}: persisted keys use profile "
                                      f"{params.security_profile}, config wants {self.config.fhe_profile}")
        else:
            params = gen_params(self.config.fhe_profile)
            sk, pk = keygen(params, self._new_rng())
            if state_dir is not None:
                write_keypair(state_dir, params, sk, pk)
        self.params, self.sk, self.pk = params, sk, pk

    def swap_qrng(self, new: RandomSource) -> None:
        swap_source(self.qrng, new)

    def install_tamper(self, fn: Callable[[Ciphertext, PublicKey], Ciphertext] | None) -> None:
        """Test-only: rewrite every ciphertext this relay forwards."""
        if not self.config.test_hooks:
            raise HookDisabledError(f"{self.relay_id}: test hooks are disabled")
        self._tamper = fn

    # ------------------------------------------------------------------ helpers

    def route_next_hop(self, dest_relay: str) -> tuple[str, str]:
        if dest_relay == self.relay_id:
            raise UnroutableError(f"{self.relay_id}: no route to itself", relay_id=self.relay_id)
        try:
            next_hop, link_id = self.config.routing[dest_relay]
        except KeyError:
            raise UnroutableError(f"{self.relay_id}: no route to {dest_relay!r}",
                                  relay_id=self.relay_id) from None
        return next_hop, link_id

    def _dest_key(self, dest_relay: str) -> PublicKey:
        if dest_relay == self.relay_id and self.pk is not None:
            return self.pk
        with self._keys_lock:
            pk = self._dest_keys.get(dest_relay)
        if pk is not None:
            return pk
        try:
            _, pk = self.registry.fetch(dest_relay).load()
        except ZtqrError as exc:
            raise DependencyError(f"{self.relay_id}: registry has no usable key for {dest_relay}: "
                                  f"{exc.message}", relay_id=self.relay_id) from exc
        with self._keys_lock:
            self._dest_keys[dest_relay] = pk
        return pk

    def forget_registry_cache(self) -> None:
        with self._keys_lock:
            self._dest_keys.clear()

    def _encrypt_key(self, pk: PublicKey, key: BitKey) -> Ciphertext:
        return encrypt(pk, encode(key, pk.params), self._new_rng())

    def _record(self, op_kind: str, key_bits: int, timing, payload_bytes: int, exchange_id: str) -> None:
        if self.recorder is not None:
            self.recorder.add(self.relay_id, op_kind, key_bits, timing, payload_bytes, exchange_id)

    def _local_sae(self, caller: str | None) -> str:
        if caller is None:
            if len(self.config.local_sae_ids) == 1:
                return self.config.local_sae_ids[0]
            raise BadRequestError(f"{self.relay_id}: caller SAE must be identified")
        if caller not in self.config.local_sae_ids:
            raise NotFoundError(f"SAE {caller!r} is not served by {self.relay_id}", relay_id=self.relay_id)
        return caller

    def _kme(self, link_id: str) -> KmeClient:
        try:
            return self.kmes[link_id]
        except KeyError:
            raise NotFoundError(f"{self.relay_id}: not attached to link {link_id!r}",
                                relay_id=self.relay_id) from None

    def _open_record(self, rec: InTransitRecord) -> None:
        with self._transit_lock:
            if rec.exchange_id in self._transit:
                raise ConflictError(f"exchange {rec.exchange_id} already seen", relay_id=self.relay_id,
                                    exchange_id=rec.exchange_id)
            rec.opened_at = self._clock()
            self._transit[rec.exchange_id] = rec

    def _close_record(self, exchange_id: str, reason: str) -> InTransitRecord | None:
        with self._transit_lock:
            rec = self._transit.get(exchange_id)
            if rec is None or not rec.open:
                return None
            rec.closed_at = self._clock()
            rec.close_reason = reason
            return rec

    # ------------------------------------------------------------------ northbound (ETSI-014)

    def status(self, slave_sae_id: str, caller: str | None = None) -> dict[str, Any]:
        master = self._local_sae(caller)
        dest = self.config.sae_directory.get(slave_sae_id)
        if dest is None:
            raise NotFoundError(f"unknown SAE {slave_sae_id!r}", relay_id=self.relay_id)
        size = 256
        if dest == self.relay_id:
            stored = max_count = 1 << 16
            min_size = 8
        else:
            _, link_id = self.route_next_hop(dest)
            st = self._kme(link_id).status(self._links[link_id].peer_relay)
            stored, max_count, size, min_size = (st["stored_key_count"], st["max_key_count"], st["key_size"],
                                                 st["min_key_size"])
        return {
            "source_KME_ID": self.relay_id, "target_KME_ID": dest,
            "master_SAE_ID": master, "slave_SAE_ID": slave_sae_id,
            "key_size": size, "stored_key_count": stored, "max_key_count": max_count,
            "max_key_per_request": 128, "max_key_size": 256, "min_key_size": min_size,
            "max_SAE_ID_count": 0,
        }

    def enc_keys(self, slave_sae_id: str, number: int = 1, size: int | None = None,
                 caller: str | None = None) -> dict[str, Any]:
        return self.handle_enc_keys(self._local_sae(caller), slave_sae_id, number, size or 256)

    def dec_keys(self, master_sae_id: str, key_ids: list[str], caller: str | None = None) -> dict[str, Any]:
        return self.handle_dec_keys(self._local_sae(caller), master_sae_id, key_ids)

    def handle_enc_keys(self, initiator_sae: str, target_sae: str, number: int, size: int) -> dict[str, Any]:
        if not 1 <= number <= 128:
            raise BadRequestError("number must be in [1, 128]")
        if size not in self.qrng.source.allowed_lengths:
            raise BadRequestError(f"size {size} not offered; choose from {sorted(self.qrng.source.allowed_lengths)}")
        if self.params is not None and size > self.params.n:
            raise BadRequestError(f"size {size} exceeds ring dimension {self.params.n}")
        dest_relay = self.config.sae_directory.get(target_sae)
        if dest_relay is None:
            raise NotFoundError(f"unknown target SAE {target_sae!r}", relay_id=self.relay_id)
        with audit.acting_as(self.relay_id):
            qrng_keys = [generate_key(self.qrng.source, size) for _ in range(number)]
            if dest_relay == self.relay_id:
                return self._issue_local(initiator_sae, target_sae, qrng_keys)
            next_hop, link_id = self.route_next_hop(dest_relay)
            pk_dest = self._dest_key(dest_relay) if self.mode == ZERO_TRUST else None
            kme = self._kme(link_id)
            link_keys = kme.enc_keys(next_hop, number, size)["keys"]
            issued: list[SaeKeyPoolEntry] = []
            pending = [k["key_ID"] for k in link_keys]
            try:
                for k_qrng, link_item in zip(qrng_keys, link_keys):
                    entry = self._originate(initiator_sae, target_sae, dest_relay, next_hop, link_id,
                                            k_qrng, link_item, size, pk_dest)
                    pending.remove(link_item["key_ID"])
                    issued.append(entry)
            except ZtqrError as exc:
                self._abort(issued, pending, kme, exc)
                raise
        return {"keys": [{"key_ID": e.key_ID, "key": base64.b64encode(e.key.to_bytes()).decode()}
                         for e in issued]}

    def _issue_local(self, initiator: str, target: str, keys: list[BitKey]) -> dict[str, Any]:
        out = []
        with self._pool_lock:
            for k in keys:
                entry = SaeKeyPoolEntry(str(uuid.uuid4()), k, initiator, target, TRANSPORTED,
                                        str(uuid.uuid4()))
                self._pool[entry.key_ID] = entry
                out.append({"key_ID": entry.key_ID, "key": base64.b64encode(k.to_bytes()).decode()})
        return {"keys": out}

    def _originate(self, initiator: str, target: str, dest_relay: str, next_hop: str, link_id: str,
                   k_qrng: BitKey, link_item: dict[str, Any], size: int,
                   pk_dest: PublicKey | None) -> SaeKeyPoolEntry:
        exchange_id, key_id = str(uuid.uuid4()), str(uuid.uuid4())
        entry = SaeKeyPoolEntry(key_id, k_qrng, initiator, target, ISSUED, exchange_id)
        with self._pool_lock:
            self._pool[key_id] = entry
        self._open_record(InTransitRecord(exchange_id, key_id, None, next_hop, (link_item["key_ID"],),
                                          role="originator"))
        k_link = _key_from_container(link_item, size)
        fields = dict(exchange_id=exchange_id, key_ID=key_id, source_relay=self.relay_id,
                      dest_relay=dest_relay, dest_sae=target, source_sae=initiator, hop_link_id=link_id,
                      link_key_IDs=(link_item["key_ID"],), key_size=size)
        if pk_dest is not None:
            with timed() as t:
                ct = hxor(self._encrypt_key(pk_dest, k_qrng), self._encrypt_key(pk_dest, k_link))
            msg = ext_keys_for_ciphertext(ct, **fields)
            self._record("initial-xor", size, t, len(msg.payload), exchange_id)
        else:
            with timed() as t:
                otp = (k_qrng ^ k_link).to_bytes()
            msg = ext_keys_for_otp(otp, **fields)
            self._record("baseline-xor", size, t, len(msg.payload), exchange_id)
        try:
            self.transport.send_ext_keys(next_hop, msg.to_json())
        except ZtqrError as exc:
            exc.exchange_id = exc.exchange_id or exchange_id
            exc.relay_id = exc.relay_id or next_hop
            with self._pool_lock:
                entry.advance(VOIDED)
            self._close_record(exchange_id, "error")
            raise
        with self._pool_lock:
            entry.advance(TRANSPORTED)
        return entry

    def _abort(self, issued: list[SaeKeyPoolEntry], pending_link_keys: list[str], kme: KmeClient,
               exc: ZtqrError) -> None:
        """Void already forwarded exchanges of a failed multi-key request."""
        for entry in issued:
            with self._pool_lock:
                entry.advance(VOIDED)
            rec = self._close_record(entry.exchange_id, "error")
            if rec is not None and rec.next_hop_relay:
                self._send_void(rec.next_hop_relay, VoidMessage(entry.exchange_id, entry.key_ID, "error",
                                                                self.relay_id))
        if pending_link_keys:
            try:
                kme.void_keys(pending_link_keys)
            except ZtqrError as err:
                log.warning("%s: could not release link keys %s: %s", self.relay_id, pending_link_keys, err)
        log.info("%s: request aborted: %s", self.relay_id, exc)

    def handle_dec_keys(self, target_sae: str, master_sae_id: str, key_ids: list[str]) -> dict[str, Any]:
        if not key_ids:
            raise BadRequestError("key_IDs must not be empty")
        with self._pool_lock:
            entries = []
            for kid in key_ids:
                entry = self._pool.get(kid)
                if entry is None or entry.target_sae != target_sae or entry.initiator_sae != master_sae_id:
                    raise NotFoundError(f"key_ID {kid} not available for {target_sae} from {master_sae_id}",
                                        relay_id=self.relay_id, details=[{"key_ID": kid}])
                if entry.state != TRANSPORTED:
                    raise ConflictError(f"key_ID {kid} is {entry.state}", relay_id=self.relay_id,
                                        details=[{"key_ID": kid}])
                entries.append(entry)
            for entry in entries:
                entry.advance(DELIVERED)
        for entry in entries:
            rec = self._close_record(entry.exchange_id, "delivered")
            if rec is not None and rec.prev_hop_relay:
                self._send_void(rec.prev_hop_relay, VoidMessage(entry.exchange_id, entry.key_ID,
                                                                "delivered", self.relay_id))
        return {"keys": [{"key_ID": e.key_ID, "key": base64.b64encode(e.key.to_bytes()).decode()}
                         for e in entries]}

    # ------------------------------------------------------------------ east-west

    def receive_ext_keys(self, body: Any) -> dict[str, Any]:
        return self.handle_ext_keys(ExtKeysMessage.from_json(body))

    def receive_void(self, body: Any) -> dict[str, Any]:
        return self.handle_void(VoidMessage.from_json(body))

    def handle_ext_keys(self, msg: ExtKeysMessage) -> dict[str, Any]:
        with audit.acting_as(self.relay_id):
            try:
                return self._handle_ext_keys(msg)
            except ZtqrError as exc:
                exc.relay_id = exc.relay_id or self.relay_id
                exc.exchange_id = exc.exchange_id or msg.exchange_id
                raise

    def _handle_ext_keys(self, msg: ExtKeysMessage) -> dict[str, Any]:
        link = self._links.get(msg.hop_link_id)
        if link is None:
            raise NotFoundError(f"{self.relay_id}: not attached to link {msg.hop_link_id!r}")
        prev_hop = link.peer_relay
        terminal = msg.dest_relay == self.relay_id
        with self._transit_lock:
            if msg.exchange_id in self._transit:
                raise ConflictError(f"exchange {msg.exchange_id} already handled")
        if terminal and msg.dest_sae not in self.config.local_sae_ids:
            raise NotFoundError(f"{self.relay_id}: SAE {msg.dest_sae!r} is not local")
        if not terminal:
            next_hop, out_link = self.route_next_hop(msg.dest_relay)

        zero_trust = self.mode == ZERO_TRUST
        if zero_trust:
            if msg.encoding != ENCODING_BFV:
                raise BadRequestError(f"{self.relay_id} runs zero-trust but got {msg.encoding} payload")
            ct = msg.ciphertext()
            pk_dest = self._dest_key(msg.dest_relay)
            if ct.params_digest != pk_dest.params_digest:
                raise IncompatibleContextError("payload was not encrypted under the destination's context")
        else:
            otp = msg.otp_bytes()

        try:
            prev_items = self._kme(link.link_id).dec_keys(prev_hop, list(msg.link_key_IDs))["keys"]
        except NotFoundError as exc:
            raise DependencyError(f"{self.relay_id}: KME {link.kme_id} rejected link keys: {exc.message}",
                                  details=exc.details) from exc
        except ConflictError as exc:
            raise DependencyError(f"{self.relay_id}: link keys already used: {exc.message}",
                                  details=exc.details) from exc
        k_prev = _key_from_container(prev_items[0], msg.key_size)
        size = msg.key_size

        if terminal:
            if zero_trust:
                with timed() as t:
                    ct_final = hxor(ct, self._encrypt_key(self.pk, k_prev))
                    key = decode(decrypt(self.sk, ct_final), size)
                self._record("final-undo", size, t, len(msg.payload), msg.exchange_id)
            else:
                with timed() as t:
                    key = BitKey.from_bytes(otp, size, origin="recovered") ^ k_prev
                self._record("baseline-xor", size, t, len(msg.payload), msg.exchange_id)
            self._open_record(InTransitRecord(msg.exchange_id, msg.key_ID, prev_hop, None,
                                              tuple(msg.link_key_IDs), role="terminal"))
            with self._pool_lock:
                self._pool[msg.key_ID] = SaeKeyPoolEntry(msg.key_ID, key, msg.source_sae, msg.dest_sae,
                                                         TRANSPORTED, msg.exchange_id)
            return {"status": "stored", "relay": self.relay_id}

        if zero_trust:
            with timed() as t:
                ct_undone = hxor(ct, self._encrypt_key(pk_dest, k_prev))
            self._record("undo-xor", size, t, len(msg.payload), msg.exchange_id)
        else:
            with timed() as t:
                # classical trusted relay: the consumer key is exposed here
                exposed = BitKey.from_bytes(otp, size, origin="recovered") ^ k_prev
            self._record("baseline-xor", size, t, len(msg.payload), msg.exchange_id)

        next_item = self._kme(out_link).enc_keys(next_hop, 1, size)["keys"][0]
        k_next = _key_from_container(next_item, size)
        fields = dict(hop_link_id=out_link, link_key_IDs=(next_item["key_ID"],))
        if zero_trust:
            with timed() as t:
                ct_next = hxor(ct_undone, self._encrypt_key(pk_dest, k_next))
            if self._tamper is not None:
                ct_next = self._tamper(ct_next, pk_dest)
            out = ext_keys_for_ciphertext(ct_next, **_carry(msg, fields))
            self._record("redo-xor", size, t, len(out.payload), msg.exchange_id)
        else:
            with timed() as t:
                otp_next = (exposed ^ k_next).to_bytes()
            out = ext_keys_for_otp(otp_next, **_carry(msg, fields))
            self._record("baseline-xor", size, t, len(out.payload), msg.exchange_id)

        self._open_record(InTransitRecord(msg.exchange_id, msg.key_ID, prev_hop, next_hop,
                                          tuple(msg.link_key_IDs) + (next_item["key_ID"],)))
        try:
            self.transport.send_ext_keys(next_hop, out.to_json())
        except ZtqrError:
            self._close_record(msg.exchange_id, "error")
            raise
        return {"status": "forwarded", "relay": self.relay_id, "next_hop": next_hop}

    def handle_void(self, msg: VoidMessage) -> dict[str, Any]:
        with self._transit_lock:
            rec = self._transit.get(msg.exchange_id)
        if rec is None:
            log.info("%s: void for unknown exchange %s dropped", self.relay_id, msg.exchange_id)
            return {"status": "dropped"}
        if self._close_record(msg.exchange_id, msg.reason) is None:
            return {"status": "duplicate"}
        with self._pool_lock:
            entry = self._pool.get(rec.key_ID)
            if entry is not None and entry.state in ACTIVE_STATES:
                entry.advance(DELIVERED if msg.reason == "delivered" and rec.role == "originator" else VOIDED)
        onward = [h for h in (rec.prev_hop_relay, rec.next_hop_relay) if h and h != msg.from_relay]
        for hop in onward:
            self._send_void(hop, replace(msg, from_relay=self.relay_id))
        return {"status": "closed", "forwarded_to": onward}

    def _send_void(self, peer: str, msg: VoidMessage) -> None:
        try:
            self.transport.send_void(peer, msg.to_json())
        except ZtqrError as exc:
            log.warning("%s: void for %s to %s failed: %s", self.relay_id, msg.exchange_id, peer, exc)

    # ------------------------------------------------------------------ introspection

    def pool_entries(self) -> list[SaeKeyPoolEntry]:
        with self._pool_lock:
            return list(self._pool.values())

    def transit_records(self) -> list[InTransitRecord]:
        with self._transit_lock:
            return list(self._transit.values())

    def active_key_ids(self) -> set[str]:
        with self._pool_lock:
            ids = {e.key_ID for e in self._pool.values() if e.state in ACTIVE_STATES}
        with self._transit_lock:
            ids |= {r.key_ID for r in self._transit.values() if r.open}
        return ids

    def state_summary(self) -> dict[str, Any]:
        return {
            "relay_id": self.relay_id, "mode": self.mode, "running": self.running,
            "registry_digest": self.registry_digest,
            "pool": [{"key_ID": e.key_ID, "state": e.state, "exchange_id": e.exchange_id,
                      "initiator_sae": e.initiator_sae, "target_sae": e.target_sae}
                     for e in self.pool_entries()],
            "transit": [{"exchange_id": r.exchange_id, "key_ID": r.key_ID, "role": r.role,
                         "prev_hop_relay": r.prev_hop_relay, "next_hop_relay": r.next_hop_relay,
                         "hop_link_key_IDs": list(r.hop_link_key_IDs), "open": r.open,
                         "close_reason": r.close_reason}
                        for r in self.transit_records()],
            "active_key_ids": sorted(self.active_key_ids()),
        }


def _carry(msg: ExtKeysMessage, overrides: dict[str, Any]) -> dict[str, Any]:
    base = dict(exchange_id=msg.exchange_id, key_ID=msg.key_ID, source_relay=msg.source_relay,
                dest_relay=msg.dest_relay, dest_sae=msg.dest_sae, source_sae=msg.source_sae,
                hop_link_id=msg.hop_link_id, link_key_IDs=msg.link_key_IDs, key_size=msg.key_size)
    base.update(overrides)
    return base
