"""Noise and key samplers.

``rng`` is always a :class:`numpy.random.Generator`; callers own seeding.
"""

from __future__ import annotations

import numpy as np

from ..errors import EntropySourceError


def _guard(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EntropySourceError:
            raise
        except Exception as exc:  # a broken generator must not look like a math error
            raise EntropySourceError(f"entropy source failed in {fn.__name__}: {exc}") from exc
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_guard
def sample_ternary(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform coefficients in {-1, 0, 1} (int64)."""
    return rng.integers(-1, 2, size=n, dtype=np.int64)


@_guard
def sample_gaussian(rng: np.random.Generator, n: int, stddev: float, bound: int) -> np.ndarray:
    """Rounded continuous Gaussian, resampling any coefficient with |e| > bound."""
    out = np.rint(rng.normal(0.0, stddev, size=n)).astype(np.int64)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = np.rint(rng.normal(0.0, stddev, size=int(bad.sum()))).astype(np.int64)
        bad = np.abs(out) > bound
    return out


@_guard
def sample_uniform(rng: np.random.Generator, n: int, q: int) -> np.ndarray:
    """Uniform residues mod q as an object array."""
    if q < 1 << 63:
        return rng.integers(0, q, size=n, dtype=np.int64).astype(object)
    bits = q.bit_length()
    nbytes = (bits + 7) // 8
    mask = (1 << bits) - 1
    out = np.empty(n, dtype=object)
    filled = 0
    while filled < n:
        raw = rng.bytes(nbytes * (n - filled))
        for i in range(n - filled):
            v = int.from_bytes(raw[i * nbytes:(i + 1) * nbytes], "little") & mask
            if v < q:
                out[filled] = v
                filled += 1
    return out
