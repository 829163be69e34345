"""Binary layouts.

All four blobs share one header::

    magic(4) | version(1) | n (u32 LE) | q (32 bytes LE) | p (u32 LE)

followed by a type-specific body:

    ZTQR ciphertext   c1, c2 as n coefficients of 32 bytes LE each
    ZTPK public key   pk1, pk2 as above
    ZTSK secret key   s as above (canonical mod q)
    ZTPR params       noise_bound (u32) | noise_stddev (f64) | len (u8) | profile label
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import SerializationError
from .params import RingParams
from .scheme import Ciphertext, PublicKey, RingPoly, SecretKey

VERSION = 1
COEFF_BYTES = 32
HEADER_BYTES = 4 + 1 + 4 + 32 + 4

MAGIC_CIPHERTEXT = b"ZTQR"
MAGIC_PUBLIC_KEY = b"ZTPK"
MAGIC_PARAMS = b"ZTPR"
MAGIC_SECRET_KEY = b"ZTSK"


def _header(magic: bytes, n: int, q: int, p: int) -> bytes:
    return magic + bytes([VERSION]) + struct.pack("<I", n) + q.to_bytes(32, "little") + struct.pack("<I", p)


def _read_header(blob: bytes, magic: bytes) -> tuple[int, int, int]:
    if len(blob) < HEADER_BYTES:
        raise SerializationError(f"blob too short for header ({len(blob)} bytes)")
    if blob[:4] != magic:
        raise SerializationError(f"bad magic {blob[:4]!r}, expected {magic!r}")
    if blob[4] != VERSION:
        raise SerializationError(f"unsupported format version {blob[4]}")
    n = struct.unpack_from("<I", blob, 5)[0]
    q = int.from_bytes(blob[9:41], "little")
    p = struct.unpack_from("<I", blob, 41)[0]
    return n, q, p


def _poly_bytes(poly: RingPoly) -> bytes:
    return b"".join(int(c).to_bytes(COEFF_BYTES, "little") for c in poly.coeffs)


def _read_poly(blob: bytes, offset: int, n: int, q: int) -> RingPoly:
    end = offset + n * COEFF_BYTES
    if len(blob) < end:
        raise SerializationError("blob truncated inside coefficient block")
    coeffs = np.empty(n, dtype=object)
    for i in range(n):
        c = int.from_bytes(blob[offset + i * COEFF_BYTES:offset + (i + 1) * COEFF_BYTES], "little")
        if c >= q:
            raise SerializationError(f"coefficient {i} not reduced mod q")
        coeffs[i] = c
    return RingPoly(coeffs, q)


def _expect_len(blob: bytes, length: int) -> None:
    if len(blob) != length:
        raise SerializationError(f"expected {length} bytes, got {len(blob)}")


def ciphertext_size(n: int) -> int:
    return HEADER_BYTES + 2 * n * COEFF_BYTES


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    return _header(MAGIC_CIPHERTEXT, ct.n, ct.q, ct.p) + _poly_bytes(ct.c1) + _poly_bytes(ct.c2)


def deserialize_ciphertext(blob: bytes) -> Ciphertext:
    n, q, p = _read_header(blob, MAGIC_CIPHERTEXT)
    if n == 0 or n & (n - 1):
        raise SerializationError(f"invalid ring dimension {n}")
    if q < 2 or not 1 < p < q:
        raise SerializationError("invalid moduli in header")
    _expect_len(blob, ciphertext_size(n))
    c1 = _read_poly(blob, HEADER_BYTES, n, q)
    c2 = _read_poly(blob, HEADER_BYTES + n * COEFF_BYTES, n, q)
    return Ciphertext(c1, c2, p)


def serialize_public_key(pk: PublicKey) -> bytes:
    pr = pk.params
    return _header(MAGIC_PUBLIC_KEY, pr.n, pr.q, pr.p) + _poly_bytes(pk.pk1) + _poly_bytes(pk.pk2)


def deserialize_public_key(blob: bytes, params: RingParams) -> PublicKey:
    n, q, p = _read_header(blob, MAGIC_PUBLIC_KEY)
    if (n, q, p) != (params.n, params.q, params.p):
        raise SerializationError("public key header does not match parameters")
    _expect_len(blob, HEADER_BYTES + 2 * n * COEFF_BYTES)
    return PublicKey(_read_poly(blob, HEADER_BYTES, n, q),
                     _read_poly(blob, HEADER_BYTES + n * COEFF_BYTES, n, q), params)


def serialize_secret_key(sk: SecretKey) -> bytes:
    pr = sk.params
    return _header(MAGIC_SECRET_KEY, pr.n, pr.q, pr.p) + _poly_bytes(sk.s)


def deserialize_secret_key(blob: bytes, params: RingParams) -> SecretKey:
    n, q, p = _read_header(blob, MAGIC_SECRET_KEY)
    if (n, q, p) != (params.n, params.q, params.p):
        raise SerializationError("secret key header does not match parameters")
    _expect_len(blob, HEADER_BYTES + n * COEFF_BYTES)
    s = _read_poly(blob, HEADER_BYTES, n, q)
    if any(c not in (0, 1, q - 1) for c in s.coeffs):
        raise SerializationError("secret key is not ternary")
    return SecretKey(s, params)


def serialize_params(params: RingParams) -> bytes:
    label = params.security_profile.encode("ascii")
    return (_header(MAGIC_PARAMS, params.n, params.q, params.p)
            + struct.pack("<Id", params.noise_bound, params.noise_stddev)
            + bytes([len(label)]) + label)


def deserialize_params(blob: bytes) -> RingParams:
    n, q, p = _read_header(blob, MAGIC_PARAMS)
    off = HEADER_BYTES
    if len(blob) < off + 13:
        raise SerializationError("params blob truncated")
    bound, stddev = struct.unpack_from("<Id", blob, off)
    size = blob[off + 12]
    _expect_len(blob, off + 13 + size)
    try:
        label = blob[off + 13:].decode("ascii")
        return RingParams(n=n, q=q, p=p, noise_stddev=stddev, noise_bound=bound,
                          security_profile=label)
    except (UnicodeDecodeError, ValueError) as exc:
        raise SerializationError(f"invalid params: {exc}") from exc
