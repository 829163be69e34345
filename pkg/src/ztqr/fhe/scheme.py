"""Addition-only BFV over R_q = Z_q[x]/(x^n + 1).

Keys::

    s   ternary
    pk2 uniform mod q
    pk1 = -(pk2*s + e) mod q

Encryption of m in R_p with fresh ternary u and Gaussian e1, e2::

    c1 = pk1*u + e1 + delta*m
    c2 = pk2*u + e2

Decryption computes ``v = c1 + c2*s = delta*m + (e1 + e2*s - e*u)`` and rounds
``p*v/q``.  Addition is componentwise, so noise terms simply add up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import IncompatibleContextError
from .ntt import ntt_context
from .params import RingParams, context_digest
from .sampling import sample_gaussian, sample_ternary, sample_uniform


class RingPoly:
    """An element of Z_m[x]/(x^n + 1) with canonical coefficients in [0, m)."""

    __slots__ = ("coeffs", "modulus")

    def __init__(self, coeffs, modulus: int) -> None:
        arr = np.asarray(coeffs)
        if arr.dtype != object:
            arr = arr.astype(object)
        arr = arr % modulus
        arr.flags.writeable = False
        self.coeffs = arr
        self.modulus = modulus

    @property
    def n(self) -> int:
        return len(self.coeffs)

    def centered(self) -> np.ndarray:
        half = self.modulus // 2
        c = self.coeffs
        return np.where(c > half, c - self.modulus, c)

    def __add__(self, other: RingPoly) -> RingPoly:
        if self.modulus != other.modulus or self.n != other.n:
            raise IncompatibleContextError("ring elements live in different rings")
        return RingPoly(self.coeffs + other.coeffs, self.modulus)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, RingPoly) and self.modulus == other.modulus
                and np.array_equal(self.coeffs, other.coeffs))

    def __repr__(self) -> str:
        head = ", ".join(str(c) for c in self.coeffs[:4])
        return f"RingPoly(n={self.n}, modulus={self.modulus}, [{head}, ...])"


@dataclass(frozen=True, eq=False)
class Plaintext:
    m: RingPoly
    params: RingParams

    def __post_init__(self) -> None:
        if self.m.modulus != self.params.p or self.m.n != self.params.n:
            raise IncompatibleContextError("plaintext does not belong to these parameters")

    @classmethod
    def from_coeffs(cls, coeffs, params: RingParams) -> Plaintext:
        arr = np.zeros(params.n, dtype=object)
        coeffs = [int(c) for c in coeffs]
        if len(coeffs) > params.n:
            raise ValueError("more coefficients than the ring dimension")
        arr[:len(coeffs)] = coeffs
        return cls(RingPoly(arr, params.p), params)

    @property
    def coeffs(self) -> list[int]:
        return [int(c) for c in self.m.coeffs]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Plaintext) and self.params.digest == other.params.digest \
            and self.m == other.m


@dataclass(frozen=True, eq=False)
class SecretKey:
    s: RingPoly
    params: RingParams

    @property
    def params_digest(self) -> bytes:
        return self.params.digest

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SecretKey) and self.s == other.s \
            and self.params_digest == other.params_digest


@dataclass(frozen=True, eq=False)
class PublicKey:
    pk1: RingPoly
    pk2: RingPoly
    params: RingParams

    @property
    def params_digest(self) -> bytes:
        return self.params.digest

    def _ntt_form(self) -> tuple[np.ndarray, np.ndarray]:
        cached = self.__dict__.get("_ntt_cache")
        if cached is None:
            ctx = ntt_context(self.params.n, self.params.q)
            cached = (ctx.forward(self.pk1.coeffs), ctx.forward(self.pk2.coeffs))
            object.__setattr__(self, "_ntt_cache", cached)
        return cached

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PublicKey) and self.pk1 == other.pk1 and self.pk2 == other.pk2 \
            and self.params_digest == other.params_digest


@dataclass(frozen=True, eq=False)
class Ciphertext:
    """``add_count`` is local bookkeeping only and never serialized."""

    c1: RingPoly
    c2: RingPoly
    p: int
    add_count: int = 0

    def __post_init__(self) -> None:
        if self.c1.modulus != self.c2.modulus or self.c1.n != self.c2.n:
            raise IncompatibleContextError("ciphertext components disagree")
        if self.add_count < 0:
            raise ValueError("add_count must be non-negative")

    @property
    def n(self) -> int:
        return self.c1.n

    @property
    def q(self) -> int:
        return self.c1.modulus

    @property
    def params_digest(self) -> bytes:
        return context_digest(self.n, self.q, self.p)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Ciphertext) and self.params_digest == other.params_digest \
            and self.c1 == other.c1 and self.c2 == other.c2


def _mul(params: RingParams, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ntt_context(params.n, params.q).multiply(a, b)


def keygen(params: RingParams, rng: np.random.Generator) -> tuple[SecretKey, PublicKey]:
    n, q = params.n, params.q
    s = sample_ternary(rng, n)
    pk2 = sample_uniform(rng, n, q)
    e = sample_gaussian(rng, n, params.noise_stddev, params.noise_bound)
    s_obj = s.astype(object) % q
    pk1 = -(_mul(params, pk2, s_obj) + e.astype(object)) % q
    return SecretKey(RingPoly(s_obj, q), params), PublicKey(RingPoly(pk1, q), RingPoly(pk2, q), params)


def encrypt(pk: PublicKey, m: Plaintext, rng: np.random.Generator) -> Ciphertext:
    params = pk.params
    if m.params.digest != pk.params_digest:
        raise IncompatibleContextError("plaintext and public key use different parameters")
    n, q = params.n, params.q
    u = sample_ternary(rng, n).astype(object) % q
    e1 = sample_gaussian(rng, n, params.noise_stddev, params.noise_bound).astype(object)
    e2 = sample_gaussian(rng, n, params.noise_stddev, params.noise_bound).astype(object)
    ctx = ntt_context(n, q)
    pk1_hat, pk2_hat = pk._ntt_form()
    u_hat = ctx.forward(u)
    c1 = ctx.inverse(pk1_hat * u_hat % q) + e1 + params.delta * m.m.coeffs
    c2 = ctx.inverse(pk2_hat * u_hat % q) + e2
    return Ciphertext(RingPoly(c1, q), RingPoly(c2, q), params.p)


def hadd(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    if a.params_digest != b.params_digest:
        raise IncompatibleContextError("cannot add ciphertexts from different contexts")
    return Ciphertext(a.c1 + b.c1, a.c2 + b.c2, a.p, a.add_count + b.add_count + 1)


def _phase(sk: SecretKey, ct: Ciphertext) -> RingPoly:
    if sk.params_digest != ct.params_digest:
        raise IncompatibleContextError("secret key does not match the ciphertext context")
    params = sk.params
    return RingPoly(ct.c1.coeffs + _mul(params, ct.c2.coeffs, sk.s.coeffs), params.q)


def decrypt(sk: SecretKey, ct: Ciphertext) -> Plaintext:
    params = sk.params
    p, q = params.p, params.q
    v = _phase(sk, ct).centered()
    m = (2 * p * v + q) // (2 * q)  # round half up
    return Plaintext(RingPoly(m, p), params)


def noise_estimate(sk: SecretKey, ct: Ciphertext) -> int:
    """Infinity norm of ``c1 + c2*s - delta*m`` (centered) for the decrypted m."""
    m = decrypt(sk, ct)
    params = sk.params
    residue = RingPoly(_phase(sk, ct).coeffs - params.delta * m.m.coeffs, params.q).centered()
    return int(max(abs(int(x)) for x in residue))


def keypair_residue(sk: SecretKey, pk: PublicKey) -> int:
    """Infinity norm of ``pk1 + pk2*s``; a matching pair leaves only the keygen error."""
    params = sk.params
    if sk.params_digest != pk.params_digest:
        raise IncompatibleContextError("secret and public key use different parameters")
    r = RingPoly(pk.pk1.coeffs + _mul(params, pk.pk2.coeffs, sk.s.coeffs), params.q).centered()
    return int(max(abs(int(x)) for x in r))


def raw_ciphertext(params: RingParams, c1, c2=None) -> Ciphertext:
    """Build a ciphertext from arbitrary coefficients (test and attack tooling only).

    ``raw_ciphertext(params, e)`` with ``c2`` omitted decrypts to ``round(p*e/q)``
    under every secret key, which makes it a pure noise term.
    """
    n, q = params.n, params.q
    c1 = np.asarray([int(x) for x in c1], dtype=object)
    c2 = np.zeros(n, dtype=object) if c2 is None else np.asarray([int(x) for x in c2], dtype=object)
    if len(c1) != n or len(c2) != n:
        raise ValueError(f"raw ciphertext needs {n} coefficients per component")
    return Ciphertext(RingPoly(c1, q), RingPoly(c2, q), params.p)
