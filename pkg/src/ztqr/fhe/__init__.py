"""Addition-only BFV homomorphic encryption."""

from .params import (DESK, DESK_Q, PAPER_Q, PAPER_STRENGTH, PLAINTEXT_MODULUS, PROFILES,
                     RingParams, context_digest, find_ntt_prime, gen_params)
from .scheme import (Ciphertext, Plaintext, PublicKey, RingPoly, SecretKey, decrypt, encrypt,
                     hadd, keygen, keypair_residue, noise_estimate, raw_ciphertext)
from .serialize import (deserialize_ciphertext, deserialize_params, deserialize_public_key,
                        deserialize_secret_key, serialize_ciphertext, serialize_params,
                        serialize_public_key, serialize_secret_key)

__all__ = [
    "DESK", "DESK_Q", "PAPER_Q", "PAPER_STRENGTH", "PLAINTEXT_MODULUS", "PROFILES",
    "RingParams", "context_digest", "find_ntt_prime", "gen_params",
    "Ciphertext", "Plaintext", "PublicKey", "RingPoly", "SecretKey",
    "decrypt", "encrypt", "hadd", "keygen", "keypair_residue", "noise_estimate", "raw_ciphertext",
    "deserialize_ciphertext", "deserialize_params", "deserialize_public_key",
    "deserialize_secret_key", "serialize_ciphertext", "serialize_params",
    "serialize_public_key", "serialize_secret_key",
]
