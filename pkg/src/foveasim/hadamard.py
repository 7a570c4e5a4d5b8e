"""Hadamard bases, fast transforms, and differential pattern encoding.

The measurement masks are rows of a Sylvester-construction Hadamard matrix
(entries +-1, mutually orthogonal, first row all ones).  A detector that can
only block or transmit light represents each +-1 mask as a complementary
pair of {1,0} masks; subtracting the two transmitted intensities recovers
the +-1 correlation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _parity(v: np.ndarray) -> np.ndarray:
    # Bit-parity of non-negative integers, vectorized.
    v = v.copy()
    for shift in (16, 8, 4, 2, 1):
        v ^= v >> shift
    return v & 1


@dataclass(frozen=True)
class HadamardBasis:
    """Sylvester Hadamard basis of a power-of-two order.

    Rows are generated on demand; entry (i, j) is (-1)**popcount(i & j),
    which reproduces the Kronecker (natural) ordering.
    """

    order: int

    def __post_init__(self):
        if not _is_power_of_two(self.order):
            raise ValueError(f"Hadamard order must be a power of two, got {self.order}")

    def row(self, n: int) -> np.ndarray:
        """Row n (0-based) as an int8 vector of +-1."""
        if not 0 <= n < self.order:
            raise IndexError(f"row index {n} out of range for order {self.order}")
        j = np.arange(self.order)
        return (1 - 2 * _parity(n & j)).astype(np.int8)

    def matrix(self) -> np.ndarray:
        """Dense order x order matrix of +-1 (int8). Intended for tests/small orders."""
        i = np.arange(self.order)
        return (1 - 2 * _parity(i[:, None] & i[None, :])).astype(np.int8)


@lru_cache(maxsize=8)
def build_basis(order: int) -> HadamardBasis:
    """Construct the Sylvester Hadamard basis of the given power-of-two order."""
    return HadamardBasis(order)


def fwht(v: np.ndarray) -> np.ndarray:
    """Fast Walsh-Hadamard transform along the last axis: returns H @ v.

    H is the Sylvester matrix in natural order, so fwht(fwht(v)) == N * v.
    Accepts batched input (..., N).  O(N log N) per vector.
    """
    a = np.asarray(v, dtype=np.float64).copy()
    n = a.shape[-1]
    if not _is_power_of_two(n):
        raise ValueError(f"fwht length must be a power of two, got {n}")
    lead = a.shape[:-1]
    h = 1
    while h < n:
        a = a.reshape(lead + (n // (2 * h), 2, h))
        top = a[..., 0, :] + a[..., 1, :]
        bot = a[..., 0, :] - a[..., 1, :]
        a[..., 0, :] = top
        a[..., 1, :] = bot
        a = a.reshape(lead + (n,))
        h *= 2
    return a


@dataclass(frozen=True)
class DifferentialPatternPair:
    """Complementary {1,0} mask pair emulating one +-1 mask.

    positive + negative is all ones; positive - negative is the +-1 mask.
    """

    positive: np.ndarray
    negative: np.ndarray


def to_differential(mask: np.ndarray) -> DifferentialPatternPair:
    """Split a +-1 mask into its positive/negative {1,0} display pair."""
    m = np.asarray(mask)
    if not np.all(np.isin(m, (-1, 1))):
        raise ValueError("mask entries must be +1 or -1")
    positive = (m == 1).astype(np.uint8)
    negative = (m == -1).astype(np.uint8)
    return DifferentialPatternPair(positive=positive, negative=negative)


def differential_decode(i_pos, i_neg):
    """Correlation coefficient from a positive/negative intensity pair."""
    return i_pos - i_neg
