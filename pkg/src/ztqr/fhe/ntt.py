"""Negacyclic number-theoretic transform over Z_q[x]/(x^n + 1).

Coefficients are held in numpy ``object`` arrays so that the same code path
serves the 61-bit desk modulus and the 220-bit paper-strength modulus; each
butterfly stage is a handful of vectorised big-integer operations.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .params import negacyclic_root


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


class NttContext:
    """Precomputed twiddles for one (n, q) pair; use :func:`ntt_context`."""

    def __init__(self, n: int, q: int) -> None:
        self.n, self.q = n, q
        psi = negacyclic_root(n, q)
        psi_inv = pow(psi, -1, q)
        n_inv = pow(n, -1, q)
        omega = psi * psi % q
        self._rev = _bit_reverse(n)
        self._psi_pows = _powers(psi, n, q)
        # inverse twist folds in n^{-1}
        self._psi_inv_pows = np.array([(int(x) * n_inv) % q for x in _powers(psi_inv, n, q)],
                                      dtype=object)
        self._fwd = self._stage_twiddles(omega)
        self._inv = self._stage_twiddles(pow(omega, -1, q))

    def _stage_twiddles(self, root: int) -> list[np.ndarray]:
        n, q = self.n, self.q
        stages = []
        m = 1
        while m < n:
            w = pow(root, n // (2 * m), q)  # primitive 2m-th root
            stages.append(_powers(w, m, q))
            m *= 2
        return stages

    def _cyclic(self, a: np.ndarray, twiddles: list[np.ndarray]) -> np.ndarray:
        q, n = self.q, self.n
        a = a[self._rev]
        m = 1
        for w in twiddles:
            blocks = a.reshape(n // (2 * m), 2, m)
            even = blocks[:, 0, :]
            odd = blocks[:, 1, :] * w % q
            a = np.concatenate(((even + odd) % q, (even - odd) % q), axis=1).reshape(n)
            m *= 2
        return a

    def forward(self, a: np.ndarray) -> np.ndarray:
        return self._cyclic(np.asarray(a, dtype=object) * self._psi_pows % self.q, self._fwd)

    def inverse(self, a_hat: np.ndarray) -> np.ndarray:
        return self._cyclic(np.asarray(a_hat, dtype=object), self._inv) * self._psi_inv_pows % self.q

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.inverse(self.forward(a) * self.forward(b) % self.q)


def _powers(x: int, count: int, q: int) -> np.ndarray:
    out = np.empty(count, dtype=object)
    acc = 1
    for i in range(count):
        out[i] = acc
        acc = acc * x % q
    return out


@lru_cache(maxsize=8)
def ntt_context(n: int, q: int) -> NttContext:
    return NttContext(n, q)
