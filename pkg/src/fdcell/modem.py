"""
SC-FDMA transmit/receive building blocks shared by the downlink and uplink.

Chain, per user::

    bits -> qam_map -> dft_spread (M) -> map_subcarriers (N) -> to_time_with_cp
         ... channel ...
    strip_cp_and_dft -> demap_subcarriers -> equalise -> dft_despread -> qam_demap_hard

Gray mapping table
------------------
Square QAM is built from two Gray-coded PAM axes. For an axis carrying ``m``
bits, the bit group (MSB first) is read as a Gray code ``g``; the amplitude
index is ``i = gray_decode(g)`` and the level is ``2*i - (2**m - 1)``. The first
half of each symbol's bits drives the in-phase axis, the second half the
quadrature axis. For 16-QAM this gives, per axis::

    00 -> -3    01 -> -1    11 -> +1    10 -> +3

scaled by ``1/sqrt(10)`` so the average symbol energy is one.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numerics import DimensionError, dft, idft

SUPPORTED_ORDERS = (4, 16, 64)


def _bits_per_symbol(order: int) -> int:
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"modulation order must be one of {SUPPORTED_ORDERS}, got {order}")
    return int(np.log2(order))


def _gray_decode(g: np.ndarray) -> np.ndarray:
    i = g.copy()
    shift = g >> 1
    while np.any(shift):
        i ^= shift
        shift >>= 1
    return i


@lru_cache(maxsize=None)
def _axis_params(order: int) -> tuple[int, int, float]:
    k = _bits_per_symbol(order)
    m = k // 2
    levels = 2**m
    # mean energy of a square QAM with odd-integer levels
    scale = np.sqrt(2.0 * (levels**2 - 1) / 3.0)
    return m, levels, scale


def constellation(order: int) -> np.ndarray:
    """All `order` points indexed by the integer value of their bit label (MSB first)."""
    k = _bits_per_symbol(order)
    labels = np.arange(order)
    bits = ((labels[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.int8)
    return qam_map(bits.ravel(), order)


def qam_map(bits, order: int = 16) -> np.ndarray:
    """Gray-mapped, unit-average-energy square QAM symbols."""
    k = _bits_per_symbol(order)
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % k:
        raise DimensionError(f"bit count {bits.size} is not a multiple of {k}")
    m, levels, scale = _axis_params(order)
    groups = bits.reshape(-1, k)
    weights = 1 << np.arange(m - 1, -1, -1)
    gi = groups[:, :m] @ weights
    gq = groups[:, m:] @ weights
    ai = 2 * _gray_decode(gi) - (levels - 1)
    aq = 2 * _gray_decode(gq) - (levels - 1)
    return (ai + 1j * aq) / scale


def qam_demap_hard(y, order: int = 16) -> np.ndarray:
    """Minimum-distance hard decisions back to bits.

    For square QAM with a Gray axis mapping the nearest constellation point is
    found independently per axis, which is what this does.
    """
    k = _bits_per_symbol(order)
    m, levels, scale = _axis_params(order)
    y = np.asarray(y, dtype=complex).ravel() * scale

    def axis_bits(v):
        idx = np.clip(np.rint((v + (levels - 1)) / 2.0), 0, levels - 1).astype(np.int64)
        g = idx ^ (idx >> 1)
        return (g[:, None] >> np.arange(m - 1, -1, -1)) & 1

    out = np.concatenate([axis_bits(y.real), axis_bits(y.imag)], axis=1)
    return out.astype(np.int8).reshape(-1)[: y.size * k]


def qam_slice(y, order: int = 16) -> np.ndarray:
    """Nearest constellation point (hard decision, re-modulated)."""
    return qam_map(qam_demap_hard(y, order), order)


def dft_spread(x, m: int | None = None) -> np.ndarray:
    """M-point unitary DFT spreading of a data block."""
    x = np.asarray(x, dtype=complex)
    return dft(x, x.shape[-1] if m is None else m)


def dft_despread(x, m: int | None = None) -> np.ndarray:
    """Inverse of :func:`dft_spread`."""
    x = np.asarray(x, dtype=complex)
    return idft(x, x.shape[-1] if m is None else m)


@dataclass(frozen=True)
class Allocation:
    """Subcarrier allocation of `M` data tones into an `N`-tone grid.

    Stored as the list of occupied grid indices; ``indices[i]`` is the grid
    tone carrying data tone ``i``. Applied as a gather/scatter, equivalent to
    multiplying by the ``N x M`` selection matrix (and its transpose for
    deallocation).
    """

    n: int
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("allocation needs at least one tone")
        if idx.min() < 0 or idx.max() >= self.n:
            raise IndexError(f"allocation index out of range for N={self.n}")
        if np.unique(idx).size != idx.size:
            raise ValueError("allocation indices must be distinct")

    @property
    def m(self) -> int:
        return len(self.indices)

    @property
    def index_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)

    def matrix(self) -> np.ndarray:
        """Dense ``N x M`` 0/1 matrix; for tests and small examples."""
        a = np.zeros((self.n, self.m))
        a[self.index_array, np.arange(self.m)] = 1.0
        return a

    @classmethod
    def localized(cls, n: int, m: int) -> "Allocation":
        """Contiguous block of `m` tones centred in the grid."""
        if not 0 < m <= n:
            raise ValueError(f"need 0 < M <= N, got M={m}, N={n}")
        start = (n - m) // 2
        return cls(n, tuple(range(start, start + m)))

    @classmethod
    def interleaved(cls, n: int, m: int) -> "Allocation":
        """`m` tones spread evenly over the grid."""
        if not 0 < m <= n:
            raise ValueError(f"need 0 < M <= N, got M={m}, N={n}")
        return cls(n, tuple(int(np.floor(i * n / m)) for i in range(m)))


def map_subcarriers(xbar, alloc: Allocation) -> np.ndarray:
    """Place `M` spread symbols on the `N`-tone grid; other tones are zero."""
    xbar = np.asarray(xbar, dtype=complex)
    if xbar.shape[-1] != alloc.m:
        raise DimensionError(f"expected {alloc.m} tones, got {xbar.shape[-1]}")
    d = np.zeros(xbar.shape[:-1] + (alloc.n,), dtype=complex)
    d[..., alloc.index_array] = xbar
    return d


def demap_subcarriers(d, alloc: Allocation) -> np.ndarray:
    """Gather the allocated tones back out of an `N`-tone grid."""
    d = np.asarray(d, dtype=complex)
    if d.shape[-1] != alloc.n:
        raise DimensionError(f"expected {alloc.n} tones, got {d.shape[-1]}")
    return d[..., alloc.index_array]


def to_time_with_cp(d, cp_len: int, channel_len: int = 1) -> np.ndarray:
    """N-point unitary IDFT followed by cyclic-prefix insertion.

    `channel_len` is the channel memory the prefix must absorb; a prefix
    shorter than ``channel_len - 1`` breaks the circular-convolution model and
    is rejected.
    """
    d = np.asarray(d, dtype=complex)
    if cp_len < 0:
        raise ValueError("cp_len must be non-negative")
    if cp_len < channel_len - 1:
        raise ValueError(f"cyclic prefix {cp_len} shorter than channel memory {channel_len - 1}")
    n = d.shape[-1]
    if cp_len > n:
        raise ValueError("cyclic prefix longer than the symbol")
    body = idft(d, n)
    return np.concatenate([body[..., n - cp_len:], body], axis=-1)


def strip_cp_and_dft(y, n: int, cp_len: int) -> np.ndarray:
    """Drop the cyclic prefix and return the N-point unitary DFT of the body."""
    y = np.asarray(y, dtype=complex)
    if y.shape[-1] != n + cp_len:
        raise DimensionError(f"expected {n + cp_len} samples, got {y.shape[-1]}")
    return dft(y[..., cp_len:], n)
