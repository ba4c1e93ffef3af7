"""Counter-based 64-bit random streams.

Every stochastic step in the package draws from these helpers, so the
outputs are reproducible bit-for-bit in any language that implements
SplitMix64 and Box-Muller the same way:

* the k-th raw word of stream ``seed`` is ``mix64(seed + (k + 1) * GOLDEN)``
* a uniform in [0, 1) keeps the top 53 bits: ``(word >> 11) * 2**-53``
* normals pair words (2p, 2p + 1): ``r = sqrt(-2 ln(1 - u1))``, even slots
  take ``r cos(2 pi u2)``, odd slots ``r sin(2 pi u2)``
* an integer in [0, n) is ``((word >> 11) * n) >> 53``
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def words(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Raw words ``offset .. offset + n - 1`` of the stream for ``seed``."""
    k = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + k * np.uint64(GOLDEN)
        return _mix64_array(z)


def uniforms(seed: int, n: int, offset: int = 0) -> np.ndarray:
    w = words(seed, n, offset) >> np.uint64(11)
    return w.astype(np.float64) * 2.0**-53


def normals(seed: int, n: int) -> np.ndarray:
    """``n`` standard normal variates by Box-Muller."""
    pairs = (n + 1) // 2
    u = uniforms(seed, 2 * pairs)
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(angle)
    out[1::2] = r * np.sin(angle)
    return out[:n]


def integers(seed: int, n: int, high: int, offset: int = 0) -> np.ndarray:
    """``n`` integers uniform on ``[0, high)``."""
    top = [int(w) >> 11 for w in words(seed, n, offset)]
    return np.array([(t * high) >> 53 for t in top], dtype=np.int64)


def permutation(seed: int, n: int) -> np.ndarray:
    """Fisher-Yates shuffle of ``range(n)``; step j swaps j with a draw on [0, j]."""
    perm = list(range(n))
    for j in range(n - 1, 0, -1):
        k = int(integers(seed, 1, j + 1, offset=n - 1 - j)[0])
        perm[j], perm[k] = perm[k], perm[j]
    return np.array(perm, dtype=np.int64)
