"""Inter-relay payload codec and message envelopes.

A ciphertext travels as ``base64(gzip(serialize(ct)))``.  gzip runs at a fixed
level with a zeroed header timestamp so equal ciphertexts give equal payloads.
Every decode failure is raised as :class:`~ztqr.errors.DecodeError` tagged
with the one stage that failed.
"""

from __future__ import annotations

import base64
import binascii
import gzip
import zlib
from dataclasses import asdict, dataclass, field
from typing import Any

import jsonschema

from .errors import DecodeError, SerializationError
from .fhe import Ciphertext, deserialize_ciphertext, serialize_ciphertext

GZIP_LEVEL = 6
EXT_KEYS_SCHEMA_TAG = "ztqr-extkeys/1"
VOID_SCHEMA_TAG = "ztqr-void/1"
ENCODING_BFV = "bfv-gzip-base64"
ENCODING_OTP = "otp-base64"
VOID_REASONS = ("delivered", "expired", "error")


def _gzip(data: bytes) -> bytes:
    return gzip.compress(data, compresslevel=GZIP_LEVEL, mtime=0)


def _b64decode(payload: str) -> bytes:
    try:
        return base64.b64decode(payload.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError, AttributeError) as exc:
        raise DecodeError("base64", f"payload is not valid base64 ({exc})") from exc


def pack(ct: Ciphertext) -> str:
    return base64.b64encode(_gzip(serialize_ciphertext(ct))).decode("ascii")


def unpack(payload: str) -> Ciphertext:
    compressed = _b64decode(payload)
    try:
        raw = gzip.decompress(compressed)
    except (OSError, EOFError, zlib.error) as exc:
        raise DecodeError("gzip", f"payload is not a valid gzip stream ({exc})") from exc
    try:
        return deserialize_ciphertext(raw)
    except SerializationError as exc:
        raise DecodeError("deserialize", exc.message) from exc


def pack_otp(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unpack_otp(payload: str) -> bytes:
    return _b64decode(payload)


@dataclass(frozen=True)
class SizeReport:
    encoded_chars: int
    gzip_bytes: int
    raw_bytes: int


def measure(payload: str) -> SizeReport:
    compressed = _b64decode(payload)
    try:
        raw = gzip.decompress(compressed)
    except (OSError, EOFError, zlib.error) as exc:
        raise DecodeError("gzip", f"payload is not a valid gzip stream ({exc})") from exc
    return SizeReport(len(payload), len(compressed), len(raw))


EXT_KEYS_JSON_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ext_keys",
    "type": "object",
    "required": ["schema", "exchange_id", "key_ID", "source_relay", "dest_relay", "dest_sae",
                 "hop_link_id", "link_key_IDs", "key_size", "encoding", "payload", "payload_bytes"],
    "properties": {
        "schema": {"const": EXT_KEYS_SCHEMA_TAG},
        "exchange_id": {"type": "string", "minLength": 1},
        "key_ID": {"type": "string", "minLength": 1},
        "source_relay": {"type": "string", "minLength": 1},
        "dest_relay": {"type": "string", "minLength": 1},
        "source_sae": {"type": "string"},
        "dest_sae": {"type": "string", "minLength": 1},
        "hop_link_id": {"type": "string", "minLength": 1},
        "link_key_IDs": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "key_size": {"type": "integer", "minimum": 1},
        "encoding": {"enum": [ENCODING_BFV, ENCODING_OTP]},
        "payload": {"type": "string"},
        "payload_bytes": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

VOID_JSON_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "void",
    "type": "object",
    "required": ["schema", "exchange_id", "key_ID", "reason"],
    "properties": {
        "schema": {"const": VOID_SCHEMA_TAG},
        "exchange_id": {"type": "string", "minLength": 1},
        "key_ID": {"type": "string"},
        "reason": {"enum": list(VOID_REASONS)},
        "from_relay": {"type": "string"},
    },
    "additionalProperties": False,
}


def _check(schema: dict[str, Any], body: Any, what: str) -> None:
    try:
        jsonschema.validate(body, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise DecodeError("envelope", f"{what} invalid at {where}: {exc.message}") from exc


@dataclass(frozen=True)
class ExtKeysMessage:
    exchange_id: str
    key_ID: str
    source_relay: str
    dest_relay: str
    dest_sae: str
    hop_link_id: str
    payload: str
    payload_bytes: int
    link_key_IDs: tuple[str, ...] = ()
    key_size: int = 256
    source_sae: str = ""
    encoding: str = ENCODING_BFV
    schema: str = field(default=EXT_KEYS_SCHEMA_TAG)

    def to_json(self) -> dict[str, Any]:
        body = asdict(self)
        body["link_key_IDs"] = list(self.link_key_IDs)
        return body

    @classmethod
    def from_json(cls, body: Any) -> ExtKeysMessage:
        _check(EXT_KEYS_JSON_SCHEMA, body, "ext_keys message")
        msg = cls(**{**body, "link_key_IDs": tuple(body["link_key_IDs"])})
        return msg

    def ciphertext(self) -> Ciphertext:
        """Decode the payload, checking the declared gzip length first."""
        if self.encoding != ENCODING_BFV:
            raise DecodeError("envelope", f"payload encoding is {self.encoding}, not {ENCODING_BFV}")
        compressed = _b64decode(self.payload)
        if len(compressed) != self.payload_bytes:
            raise DecodeError("envelope",
                              f"payload_bytes says {self.payload_bytes}, payload decodes to {len(compressed)}")
        return unpack(self.payload)

    def otp_bytes(self) -> bytes:
        if self.encoding != ENCODING_OTP:
            raise DecodeError("envelope", f"payload encoding is {self.encoding}, not {ENCODING_OTP}")
        data = unpack_otp(self.payload)
        if len(data) != self.payload_bytes:
            raise DecodeError("envelope",
                              f"payload_bytes says {self.payload_bytes}, payload decodes to {len(data)}")
        return data


def ext_keys_for_ciphertext(ct: Ciphertext, **fields: Any) -> ExtKeysMessage:
    payload = pack(ct)
    return ExtKeysMessage(payload=payload, payload_bytes=len(base64.b64decode(payload)),
                          encoding=ENCODING_BFV, **fields)


def ext_keys_for_otp(data: bytes, **fields: Any) -> ExtKeysMessage:
    return ExtKeysMessage(payload=pack_otp(data), payload_bytes=len(data), encoding=ENCODING_OTP, **fields)


@dataclass(frozen=True)
class VoidMessage:
    exchange_id: str
    key_ID: str
    reason: str = "delivered"
    from_relay: str = ""
    schema: str = field(default=VOID_SCHEMA_TAG)

    def __post_init__(self) -> None:
        if self.reason not in VOID_REASONS:
            raise ValueError(f"void reason must be one of {VOID_REASONS}")

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, body: Any) -> VoidMessage:
        _check(VOID_JSON_SCHEMA, body, "void message")
        return cls(**body)
