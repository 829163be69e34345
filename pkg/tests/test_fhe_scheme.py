import numpy as np
import pytest

from ztqr.errors import EntropySourceError, IncompatibleContextError
from ztqr.fhe import (Plaintext, RingParams, decrypt, encrypt, find_ntt_prime, gen_params, hadd,
                      keygen, keypair_residue, noise_estimate, raw_ciphertext, serialize_ciphertext,
                      serialize_public_key)

from oracles import bfv_threshold, r_squared


def rand_pt(params, rng):
    return Plaintext.from_coeffs(rng.integers(0, params.p, params.n), params)


def test_keygen_deterministic_under_seed(desk):
    a = keygen(desk, np.random.default_rng(0))
    b = keygen(desk, np.random.default_rng(0))
    assert a[0] == b[0] and a[1] == b[1]
    assert serialize_public_key(a[1]) == serialize_public_key(b[1])


def test_secret_is_ternary(desk_keys):
    sk, _ = desk_keys
    assert set(int(x) for x in sk.s.centered()) <= {-1, 0, 1}


def test_public_key_residue_within_noise_bound(desk, desk_keys):
    sk, pk = desk_keys
    assert keypair_residue(sk, pk) <= desk.noise_bound


def test_roundtrip_100_keypairs(desk):
    rng = np.random.default_rng(99)
    for seed in range(100):
        sk, pk = keygen(desk, np.random.default_rng(seed))
        m = rand_pt(desk, rng)
        assert decrypt(sk, encrypt(pk, m, rng)) == m


def test_roundtrip_1000_plaintexts(desk, desk_keys):
    sk, pk = desk_keys
    rng = np.random.default_rng(1)
    for _ in range(1000):
        m = rand_pt(desk, rng)
        assert decrypt(sk, encrypt(pk, m, rng)) == m


def test_roundtrip_paper_strength(paper, paper_keys):
    sk, pk = paper_keys
    rng = np.random.default_rng(3)
    for _ in range(3):
        m = rand_pt(paper, rng)
        assert decrypt(sk, encrypt(pk, m, rng)) == m


def test_zero_plaintext(desk, desk_keys, rng):
    sk, pk = desk_keys
    zero = Plaintext.from_coeffs([], desk)
    assert decrypt(sk, encrypt(pk, zero, rng)).coeffs == [0] * desk.n


def test_encryption_is_randomized(desk, desk_keys, rng):
    sk, pk = desk_keys
    m = rand_pt(desk, rng)
    a, b = encrypt(pk, m, rng), encrypt(pk, m, rng)
    assert a != b
    assert decrypt(sk, a) == decrypt(sk, b) == m


def test_seeded_encryption_replays_byte_identically(desk, desk_keys):
    _, pk = desk_keys
    m = rand_pt(desk, np.random.default_rng(5))
    a = encrypt(pk, m, np.random.default_rng(77))
    b = encrypt(pk, m, np.random.default_rng(77))
    assert serialize_ciphertext(a) == serialize_ciphertext(b)


def test_encrypt_rejects_foreign_plaintext(desk_keys):
    _, pk = desk_keys
    other = RingParams(n=1024, q=find_ntt_prime(40, 1024))
    with pytest.raises(IncompatibleContextError):
        encrypt(pk, Plaintext.from_coeffs([1], other), np.random.default_rng(0))


def test_hadd_identity_and_sum(desk, desk_keys, rng):
    sk, pk = desk_keys
    m1, m2 = rand_pt(desk, rng), rand_pt(desk, rng)
    zero = Plaintext.from_coeffs([], desk)
    assert decrypt(sk, hadd(encrypt(pk, m1, rng), encrypt(pk, zero, rng))) == m1
    got = decrypt(sk, hadd(encrypt(pk, m1, rng), encrypt(pk, m2, rng))).coeffs
    assert got == [(a + b) % desk.p for a, b in zip(m1.coeffs, m2.coeffs)]


def test_hadd_add_count(desk_keys, desk, rng):
    _, pk = desk_keys
    a = encrypt(pk, rand_pt(desk, rng), rng)
    b = encrypt(pk, rand_pt(desk, rng), rng)
    c = hadd(hadd(a, b), hadd(a, b))
    assert a.add_count == 0 and c.add_count == 3


def test_hadd_order_independent(desk, desk_keys, rng):
    sk, pk = desk_keys
    a, b, c = (encrypt(pk, rand_pt(desk, rng), rng) for _ in range(3))
    left = decrypt(sk, hadd(a, hadd(b, c)))
    assert left == decrypt(sk, hadd(hadd(a, b), c)) == decrypt(sk, hadd(c, hadd(b, a)))


def test_hadd_context_mismatch(desk_keys, rng):
    _, pk = desk_keys
    small = RingParams(n=1024, q=find_ntt_prime(50, 1024))
    _, pk2 = keygen(small, rng)
    a = encrypt(pk, Plaintext.from_coeffs([1], pk.params), rng)
    b = encrypt(pk2, Plaintext.from_coeffs([1], small), rng)
    with pytest.raises(IncompatibleContextError):
        hadd(a, b)


def test_decrypt_wrong_key_context(desk_keys, rng):
    sk, _ = desk_keys
    small = RingParams(n=1024, q=find_ntt_prime(50, 1024))
    _, pk2 = keygen(small, rng)
    with pytest.raises(IncompatibleContextError):
        decrypt(sk, encrypt(pk2, Plaintext.from_coeffs([1], small), rng))


def test_10000_additions_of_all_ones(desk, desk_keys, rng):
    sk, pk = desk_keys
    ones = Plaintext.from_coeffs([1] * desk.n, desk)
    acc = encrypt(pk, ones, rng)
    fresh = [encrypt(pk, ones, rng) for _ in range(64)]
    for i in range(1, 10_000):
        acc = hadd(acc, fresh[i % 64])
    assert decrypt(sk, acc).coeffs == [10_000 % desk.p] * desk.n
    assert acc.add_count == 9_999


def test_fresh_noise_bounds(desk, desk_keys, rng):
    sk, pk = desk_keys
    worst = desk.noise_bound * (2 * desk.n + 1)
    for _ in range(50):
        est = noise_estimate(sk, encrypt(pk, rand_pt(desk, rng), rng))
        assert 0 < est <= desk.noise_bound * (desk.n + 2) <= worst


def bit_pt(params, rng):
    return Plaintext.from_coeffs(rng.integers(0, 2, params.n), params)


# Noise tests use 0/1 plaintexts, the relay workload.  With arbitrary m in
# [0, p) a sum that wraps mod p adds the constant (q mod p) to the residue.
def test_noise_triangle_inequality(desk, desk_keys, rng):
    sk, pk = desk_keys
    a, b = encrypt(pk, bit_pt(desk, rng), rng), encrypt(pk, bit_pt(desk, rng), rng)
    assert noise_estimate(sk, hadd(a, b)) <= noise_estimate(sk, a) + noise_estimate(sk, b)


def test_noise_grows_linearly(desk, desk_keys, rng):
    sk, pk = desk_keys
    fresh = [encrypt(pk, bit_pt(desk, rng), rng) for _ in range(101)]
    max_fresh = max(noise_estimate(sk, c) for c in fresh)
    acc, ks, est = fresh[0], [], []
    for k in range(1, 101):
        acc = hadd(acc, fresh[k])
        ks.append(k)
        est.append(noise_estimate(sk, acc))
        assert est[-1] <= (k + 1) * max_fresh
    assert r_squared(ks, est) > 0.9


def test_decryption_threshold_matches_oracle(desk, paper):
    for params in (desk, paper):
        assert params.decryption_threshold == bfv_threshold(params.q, params.p)
    small = RingParams(n=16, q=find_ntt_prime(30, 16), p=17)
    assert small.decryption_threshold == bfv_threshold(small.q, small.p)


def test_noise_past_threshold_breaks_decryption(desk, desk_keys, rng):
    sk, pk = desk_keys
    m = rand_pt(desk, rng)
    t = desk.decryption_threshold
    ok = hadd(encrypt(pk, m, rng), raw_ciphertext(desk, [t // 2] * desk.n))
    assert decrypt(sk, ok) == m
    bad = hadd(encrypt(pk, m, rng), raw_ciphertext(desk, [t + t // 2] * desk.n))
    assert decrypt(sk, bad) != m


def test_raw_ciphertext_length_checked(desk):
    with pytest.raises(ValueError):
        raw_ciphertext(desk, [1, 2, 3])


def test_entropy_failure_surfaces(desk):
    class Broken(np.random.Generator):
        def integers(self, *a, **k):
            raise RuntimeError("hardware gone")

    broken = Broken(np.random.PCG64(0))
    with pytest.raises(EntropySourceError):
        keygen(desk, broken)


def test_plaintext_rejects_too_many_coeffs(desk):
    with pytest.raises(ValueError):
        Plaintext.from_coeffs([0] * (desk.n + 1), desk)


def test_paper_strength_ciphertext_decrypts_after_hops(paper, paper_keys):
    sk, pk = paper_keys
    rng = np.random.default_rng(8)
    m = rand_pt(paper, rng)
    ct = encrypt(pk, m, rng)
    zero = Plaintext.from_coeffs([], paper)
    for _ in range(4):
        ct = hadd(ct, encrypt(pk, zero, rng))
    assert decrypt(sk, ct) == m
    assert gen_params("paper-strength") == paper
