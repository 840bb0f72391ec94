"""
Multi-user downlink precoding at the eNB and per-tone equalisation at the UE.

Each UE has one effective receive stream, so its channel on data tone ``m`` is
a ``1 x Ne`` row ``h_l(m)`` with the closed-form SVD ``h = U E V^H`` (``U = 1``,
``E = ||h||``, ``V = h^H / ||h||``). Stacking the ``V`` columns of all UEs and
precoding with ``P = pinv(V^H) diag(beta)`` gives ``V^H P = diag(beta)``, so UE
``l`` sees only its own stream with the real gain ``E_l beta_l``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .modem import Allocation
from .numerics import DimensionError, pinv, rank1_svd

__all__ = [
    "PrecoderSet",
    "build_precoders",
    "waterfill",
    "precode_and_superpose",
    "ue_post_process",
    "mmse_equalize_diag",
]

POLICIES = ("equal", "waterfill")


@dataclass(frozen=True)
class PrecoderSet:
    """Per-tone precoding factors for `K` UEs over `M` tones.

    Attributes
    ----------
    u, e : ndarray, shape (M, K)
        Left singular value (unit modulus) and singular value of each UE row.
    v : ndarray, shape (M, Ne, K)
        Right singular vectors stacked as columns.
    p : ndarray, shape (M, Ne, K)
        Precoding matrix, column ``l`` carries UE ``l``.
    beta : ndarray, shape (M, K)
        Power weights.
    flagged : ndarray of bool, shape (M,)
        Tones whose ``V`` stack was near singular (regularised pseudo-inverse).
    """

    u: np.ndarray
    e: np.ndarray
    v: np.ndarray
    p: np.ndarray
    beta: np.ndarray
    flagged: np.ndarray

    @property
    def n_tones(self) -> int:
        return self.p.shape[0]

    @property
    def e_tilde(self) -> np.ndarray:
        """Effective per-tone gain ``E * beta``, shape (M, K)."""
        return self.e * self.beta

    def effective_matrix(self) -> np.ndarray:
        """``U E V^H P`` per tone, shape (M, K, K); diagonal when nulling is exact."""
        vh_p = np.einsum("mjk,mjl->mkl", self.v.conj(), self.p)
        return (self.u * self.e)[:, :, None] * vh_p

    def tx_power(self) -> np.ndarray:
        """Transmit power per tone for unit-energy symbols, shape (M,)."""
        return np.sum(np.abs(self.p) ** 2, axis=(1, 2))


def waterfill(gains, total: float) -> np.ndarray:
    """Water-filling powers ``max(0, mu - 1/g)`` summing to `total`."""
    g = np.asarray(gains, dtype=float)
    if total < 0:
        raise ValueError("total power must be non-negative")
    flat = g.ravel()
    p = np.zeros_like(flat)
    ok = flat > 0
    if not np.any(ok) or total == 0:
        return p.reshape(g.shape)
    inv = np.sort(1.0 / flat[ok])
    csum = np.cumsum(inv)
    n = np.arange(1, inv.size + 1)
    level = (total + csum) / n
    k = int(np.nonzero(level > inv)[0][-1])
    mu = level[k]
    p[ok] = np.maximum(0.0, mu - 1.0 / flat[ok])
    return p.reshape(g.shape)


def build_precoders(h_rows, policy: str = "equal", tone_power: float = 1.0,
                    n0: float | None = None, cond_limit: float = 1e8) -> PrecoderSet:
    """Zero-interference SVD precoders for every tone.

    Parameters
    ----------
    h_rows : ndarray, shape (M, K, Ne)
        Effective downlink rows, ``h_rows[m, l]`` being UE ``l`` on tone ``m``.
    policy : {"equal", "waterfill"}
        ``equal`` gives every UE ``tone_power / K`` on every tone.
        ``waterfill`` spreads ``M * tone_power`` over all (tone, UE) streams
        according to their gain over `n0`.
    tone_power : float
    n0 : float, optional
        Noise level; required by ``waterfill``.
    cond_limit : float
        Tones whose ``V^H`` condition number exceeds this are flagged.
    """
    h = np.asarray(h_rows, dtype=complex)
    if h.ndim != 3:
        raise DimensionError("h_rows must have shape (M, K, Ne)")
    m, k, ne = h.shape
    if k > ne:
        raise ValueError(f"{k} UEs cannot share a tone over {ne} eNB antennas")
    if policy not in POLICIES:
        raise ValueError(f"unknown power policy {policy!r}")

    u, e, v_rows = rank1_svd(h)
    v = np.transpose(v_rows, (0, 2, 1))
    vh = v.conj().transpose(0, 2, 1)
    sv = np.linalg.svd(vh, compute_uv=False)
    cond = sv[:, 0] / np.maximum(sv[:, -1], 1e-300)
    flagged = cond > cond_limit
    g = pinv(vh, rcond=1.0 / cond_limit)
    col_norm = np.linalg.norm(g, axis=1)
    safe = np.where(col_norm > 0, col_norm, 1.0)

    if policy == "equal":
        beta = np.sqrt(tone_power / k) / safe
    else:
        if n0 is None or n0 <= 0:
            raise ValueError("water-filling needs a positive noise level")
        # stream SNR per unit column power is E^2 / (||g||^2 n0)
        powers = waterfill(e**2 / (safe**2 * n0), m * tone_power)
        beta = np.sqrt(powers) / safe
    beta = np.where(col_norm > 0, beta, 0.0)
    p = g * beta[:, None, :]
    return PrecoderSet(u, e, v, p, beta, flagged)


def precode_and_superpose(xbar, ps: PrecoderSet, allocs) -> np.ndarray:
    """Per-antenna frequency grids ``e_j = sum_i A^i z_{i,j}``.

    Parameters
    ----------
    xbar : ndarray, shape (K, M)
        DFT-spread symbols of each UE.
    ps : PrecoderSet
        Built on the same `M` tones, tone ``m`` of every UE being precoded by
        ``ps.p[m]``.
    allocs : Allocation or sequence of Allocation
        Where each UE's `M` tones sit in the grid.

    Returns
    -------
    ndarray, shape (Ne, N)
    """
    xbar = np.asarray(xbar, dtype=complex)
    k, m = xbar.shape
    if isinstance(allocs, Allocation):
        allocs = [allocs] * k
    if len(allocs) != k or ps.p.shape[0] != m or ps.p.shape[2] != k:
        raise DimensionError("symbols, precoders and allocations disagree on K or M")
    ne = ps.p.shape[1]
    grid = np.zeros((ne, allocs[0].n), dtype=complex)
    for i, alloc in enumerate(allocs):
        if alloc.m != m:
            raise DimensionError(f"UE {i} allocation has {alloc.m} tones, expected {m}")
        z = ps.p[:, :, i] * xbar[i][:, None]
        grid[:, alloc.index_array] += z.T
    return grid


def ue_post_process(ybar, u) -> np.ndarray:
    """Undo the unit-modulus left singular factor: ``conj(U) * y``."""
    ybar = np.asarray(ybar, dtype=complex)
    u = np.asarray(u, dtype=complex)
    if ybar.shape != u.shape:
        raise DimensionError("received tones and U factors differ in shape")
    return u.conj() * ybar


def mmse_equalize_diag(yhat, e_tilde, n0: float) -> np.ndarray:
    """Per-tone MMSE ``conj(E) y / (|E|^2 + n0)``."""
    yhat = np.asarray(yhat, dtype=complex)
    e_tilde = np.asarray(e_tilde, dtype=complex)
    if yhat.shape != e_tilde.shape:
        raise DimensionError("received tones and gains differ in shape")
    den = np.abs(e_tilde) ** 2 + n0
    out = np.zeros_like(yhat)
    np.divide(e_tilde.conj() * yhat, den, out=out, where=den > 0)
    return out
