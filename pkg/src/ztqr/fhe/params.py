"""Ring parameters for the addition-only BFV scheme."""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

from sympy import isprime

DESK = "desk"
PAPER_STRENGTH = "paper-strength"
PROFILES = (DESK, PAPER_STRENGTH)

PLAINTEXT_MODULUS = 65537
NOISE_STDDEV = 3.2
NOISE_BOUND = 19

# Smallest 61-bit prime congruent to 1 mod 2*1024.
DESK_Q = 1152921504606877697
# Smallest 220-bit prime congruent to 1 mod 2*8192.
PAPER_Q = 842498333348457493583344221469363458551160763204392890034488918017

_PROFILE_TABLE = {
    DESK: (1024, DESK_Q),
    PAPER_STRENGTH: (8192, PAPER_Q),
}


def context_digest(n: int, q: int, p: int) -> bytes:
    """Digest of the algebraic context (n, q, p).

    Ciphertexts carry only (n, q, p) on the wire, so the binding digest is
    defined over exactly those three values.
    """
    h = hashlib.sha256(b"ztqr-ctx/1")
    h.update(struct.pack("<I", n))
    h.update(q.to_bytes(32, "little"))
    h.update(struct.pack("<I", p))
    return h.digest()


@dataclass(frozen=True)
class RingParams:
    n: int
    q: int
    p: int = PLAINTEXT_MODULUS
    noise_stddev: float = NOISE_STDDEV
    noise_bound: int = NOISE_BOUND
    security_profile: str = DESK
    delta: int = field(init=False)

    def __post_init__(self) -> None:
        n, q, p = self.n, self.q, self.p
        if n < 16 or n & (n - 1):
            raise ValueError(f"ring dimension must be a power of two >= 16, got {n}")
        if q % (2 * n) != 1:
            raise ValueError("q must be congruent to 1 mod 2n")
        if not 1 < p < q or math.gcd(p, q) != 1:
            raise ValueError("need 1 < p < q with gcd(p, q) = 1")
        if q.bit_length() > 256 or p >= 1 << 32 or n >= 1 << 32:
            raise ValueError("parameters exceed the serialization layout")
        if self.noise_bound <= 0 or self.noise_stddev <= 0:
            raise ValueError("noise parameters must be positive")
        object.__setattr__(self, "delta", q // p)
        if self.delta < 2:
            raise ValueError("delta = floor(q/p) must be at least 2")

    @property
    def digest(self) -> bytes:
        return context_digest(self.n, self.q, self.p)

    @property
    def decryption_threshold(self) -> int:
        """Largest noise magnitude that still decrypts exactly, about delta/2."""
        # round(p*(delta*m + e)/q) == m  iff  |p*e - m*(q mod p)| < q/2; take
        # the worst case m = p - 1 so the bound holds for every plaintext.
        return (self.q // 2 - (self.p - 1) * (self.q % self.p)) // self.p

    def fresh_noise_bound(self) -> int:
        """Worst-case infinity norm of fresh-ciphertext noise.

        Decryption of a fresh ciphertext leaves ``e1 + e2*s - e*u`` where e, e1,
        e2 are bounded by ``noise_bound`` and s, u are ternary, so each product
        coefficient is at most ``n*noise_bound``.
        """
        return self.noise_bound * (2 * self.n + 1)


def gen_params(profile: str = DESK) -> RingParams:
    try:
        n, q = _PROFILE_TABLE[profile]
    except KeyError:
        raise ValueError(f"unknown security profile {profile!r}; expected one of {PROFILES}") from None
    return RingParams(n=n, q=q, security_profile=profile)


def find_ntt_prime(bits: int, n: int) -> int:
    """Smallest prime of exactly ``bits`` bits that is 1 mod 2n."""
    m = 2 * n
    c = 1 << (bits - 1)
    c += (1 - c) % m
    while not isprime(c):
        c += m
    if c.bit_length() != bits:
        raise ValueError(f"no {bits}-bit prime = 1 mod {m}")
    return c


@lru_cache(maxsize=None)
def negacyclic_root(n: int, q: int) -> int:
    """A primitive 2n-th root of unity psi mod q (psi**n == -1)."""
    e = (q - 1) // (2 * n)
    for x in range(2, 10_000):
        psi = pow(x, e, q)
        # psi has order dividing 2n; psi**n == -1 forces order exactly 2n.
        if pow(psi, n, q) == q - 1:
            return psi
    raise ValueError("no 2n-th root of unity found")
