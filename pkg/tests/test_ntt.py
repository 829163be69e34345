import numpy as np
import pytest

from ztqr.fhe import DESK_Q, PAPER_Q
from ztqr.fhe.ntt import ntt_context

from oracles import negacyclic_schoolbook


@pytest.mark.parametrize("n,q", [(16, 97), (16, DESK_Q), (64, DESK_Q), (16, PAPER_Q), (32, 7681)])
def test_multiply_matches_schoolbook(n, q):
    rng = np.random.default_rng(n)
    ctx = ntt_context(n, q)
    for _ in range(5):
        a = [int(x) for x in rng.integers(0, 2**62, n)]
        b = [int(x) for x in rng.integers(0, 2**62, n)]
        a = [x % q for x in a]
        b = [x % q for x in b]
        got = ctx.multiply(np.array(a, dtype=object), np.array(b, dtype=object))
        assert [int(x) for x in got] == negacyclic_schoolbook(a, b, q)


def test_x_times_x_to_n_minus_1_wraps_to_minus_one():
    n, q = 16, 97
    ctx = ntt_context(n, q)
    x = np.zeros(n, dtype=object)
    x[1] = 1
    top = np.zeros(n, dtype=object)
    top[n - 1] = 1
    got = [int(c) for c in ctx.multiply(x, top)]
    assert got == [q - 1] + [0] * (n - 1)


def test_forward_inverse_roundtrip():
    n, q = 1024, DESK_Q
    ctx = ntt_context(n, q)
    a = np.array([int(x) for x in np.random.default_rng(1).integers(0, 2**60, n)], dtype=object)
    assert [int(x) for x in ctx.inverse(ctx.forward(a))] == [int(x) for x in a]
