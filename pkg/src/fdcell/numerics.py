"""
Complex linear-algebra and random-number primitives shared by every stage of
the simulator.

All transforms use the unitary convention (scale ``1/sqrt(n)`` in both
directions) so that power bookkeeping is exact across DFT-spreading, subcarrier
mapping and OFDM modulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DimensionError",
    "RngStream",
    "dft",
    "idft",
    "dft_matrix",
    "svd",
    "rank1_svd",
    "pinv",
    "complex_gaussian",
]


class DimensionError(ValueError):
    """Raised when array shapes do not match the requested operation."""


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite entries")


def _check_length(x: np.ndarray, size: int) -> None:
    if x.shape[-1] != size:
        raise DimensionError(f"expected length {size} along last axis, got {x.shape[-1]}")


def dft(x, size: int) -> np.ndarray:
    """Unitary DFT along the last axis.

    Parameters
    ----------
    x : array_like
        Input samples; the last axis must have length `size`.
    size : int
        Transform length.
    """
    x = np.asarray(x, dtype=complex)
    _check_length(x, size)
    return np.fft.fft(x, axis=-1, norm="ortho")


def idft(x, size: int) -> np.ndarray:
    """Unitary inverse DFT along the last axis (inverse of :func:`dft`)."""
    x = np.asarray(x, dtype=complex)
    _check_length(x, size)
    return np.fft.ifft(x, axis=-1, norm="ortho")


def dft_matrix(size: int) -> np.ndarray:
    """Explicit unitary DFT matrix ``F[k, n] = exp(-2j*pi*k*n/size)/sqrt(size)``."""
    n = np.arange(size)
    return np.exp(-2j * np.pi * np.outer(n, n) / size) / np.sqrt(size)


def svd(h) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``H = U @ diag(S) @ V^H``.

    Returns ``(U, S, V)`` with `S` real, non-negative and descending. Unlike
    :func:`numpy.linalg.svd` the third factor is `V` itself, not `V^H`.
    """
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    if h.ndim != 2:
        raise DimensionError("svd expects a 2-D matrix")
    _check_finite(h, "matrix")
    if h.shape[0] == 1:
        u, s, v = rank1_svd(h[0])
        return np.array([[u]]), np.array([s]), v[:, None]
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    return u, s, vh.conj().T


def rank1_svd(rows) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form SVD of one or many ``1 x n`` row vectors.

    For a row ``h`` the factors are ``U = 1``, ``S = ||h||`` and
    ``V = h^H / ||h||`` so that ``h = U * S * V^H``. Works on stacks: `rows`
    of shape ``(..., n)`` gives `U`, `S` of shape ``(...)`` and `V` of shape
    ``(..., n)``. A zero row gets ``V = e_0``.
    """
    rows = np.asarray(rows, dtype=complex)
    _check_finite(rows, "row vector")
    s = np.linalg.norm(rows, axis=-1)
    safe = np.where(s > 0, s, 1.0)
    v = rows.conj() / safe[..., None]
    if np.any(s == 0):
        v[s == 0] = 0.0
        v[(s == 0), 0] = 1.0
    u = np.ones(s.shape, dtype=complex)
    return u, s, v


def pinv(a, rcond: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudo-inverse, SVD based. Accepts stacks ``(..., m, n)``."""
    a = np.asarray(a, dtype=complex)
    if a.ndim < 2:
        raise DimensionError("pinv expects at least a 2-D array")
    _check_finite(a, "matrix")
    if not np.any(a):
        return np.zeros(a.shape[:-2] + (a.shape[-1], a.shape[-2]), dtype=complex)
    return np.linalg.pinv(a, rcond=rcond)


def complex_gaussian(rng: "RngStream | np.random.Generator", n, variance: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples ``CN(0, variance)``.

    `n` may be an int or a shape tuple. Real and imaginary parts each carry
    ``variance / 2``.
    """
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    gen = rng.generator if isinstance(rng, RngStream) else rng
    shape = (n,) if np.isscalar(n) else tuple(n)
    if variance == 0:
        return np.zeros(shape, dtype=complex)
    scale = np.sqrt(variance / 2.0)
    return scale * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape))


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by ``(seed, stream_id)``.

    Child streams are derived with :meth:`child`; the same key path always
    yields the same draws, independent of the order in which streams are
    created or consumed, so Monte Carlo trials can be evaluated in any order
    or in parallel.
    """

    seed: int
    stream_id: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        ids = self.stream_id if isinstance(self.stream_id, tuple) else (self.stream_id,)
        for s in ids:
            if not 0 <= int(s) < 2**64:
                raise ValueError("stream ids must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "stream_id", tuple(int(s) for s in ids))
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
        object.__setattr__(self, "_gen", np.random.Generator(np.random.PCG64(seq)))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, *keys: int) -> "RngStream":
        """Independent sub-stream; `keys` extend the stream id."""
        return RngStream(self.seed, self.stream_id + tuple(int(k) for k in keys))

    def bits(self, n: int) -> np.ndarray:
        return self._gen.integers(0, 2, size=n, dtype=np.int8)
