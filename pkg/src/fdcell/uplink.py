"""
Multi-user uplink detection at the eNB.

On each tone the eNB sees ``y = sum_i h_i x_i + n`` over its `Ne` antennas.
UEs are detected one at a time, strongest first (largest ``||h_i||^2``), with
an MMSE filter that treats the still-undetected UEs as coloured noise; each
decision is re-modulated and subtracted before the next pass. The last UE
faces noise only and its filter reduces to maximal-ratio combining.

:func:`ssic_oo` runs the procedure over a block of tones with a pluggable
decision step, so the same loop serves single tones (direct slicing) and
DFT-spread blocks (despread, slice, respread).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .modem import qam_slice
from .numerics import DimensionError, dft, idft

__all__ = [
    "UplinkTone",
    "assemble_tone",
    "mmse_terms",
    "mmse_detect_tone",
    "ssic_oo",
    "ssic_oo_detect",
    "tone_decider",
    "block_decider",
    "EPS",
]

EPS = 1e-12

# decide(xhat, gain) -> (unbiased soft symbols, re-modulated tone symbols)
Decider = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class UplinkTone:
    """One tone at the eNB.

    Attributes
    ----------
    y : ndarray, shape (Ne,)
    h : ndarray, shape (Ne, K)
        Column ``i`` is UE ``i``'s channel.
    n0 : float
    sigma2 : float
        Per-UE symbol power.
    """

    y: np.ndarray
    h: np.ndarray
    n0: float
    sigma2: float = 1.0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex)
        h = np.atleast_2d(np.asarray(self.h, dtype=complex))
        if y.ndim != 1 or h.shape[0] != y.size:
            raise DimensionError(f"y of length {y.size} does not match h {h.shape}")
        if self.n0 < 0:
            raise ValueError("noise level must be non-negative")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "h", h)

    @property
    def n_ues(self) -> int:
        return self.h.shape[1]


def assemble_tone(h, x, noise=None, n0: float = 0.0) -> UplinkTone:
    """``y = sum_i h_i x_i + noise`` on one tone."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    x = np.asarray(x, dtype=complex)
    if x.shape != (h.shape[1],):
        raise DimensionError(f"{x.size} symbols for {h.shape[1]} UEs")
    y = h @ x
    if noise is not None:
        y = y + np.asarray(noise, dtype=complex)
    return UplinkTone(y, h, n0)


def mmse_terms(y, h, target: int, interferers, n0: float, sigma2: float = 1.0):
    """Noise-scaled MMSE filter output and gain per tone.

    With ``R = sigma2 * sum_i h_i h_i^H + n0 I`` over the `interferers`, returns
    ``t = n0 h^H R^-1 y`` and ``q = n0 h^H R^-1 h``. The scaling keeps both
    finite as ``n0 -> 0``, where they become the zero-forcing projections
    ``h^H P y`` and ``h^H P h`` with ``P`` the projector orthogonal to the
    interferers. The biased estimate is ``t / (n0 / sigma2 + q)``.

    Evaluated through the matrix inversion lemma, so only the small
    interferer Gram matrix ``Hi^H Hi + (n0 / sigma2) I`` is inverted.

    Parameters
    ----------
    y : ndarray, shape (Ne, M)
    h : ndarray, shape (Ne, K, M)
    target : int
    interferers : sequence of int
        UEs whose signals are still present in `y`, excluding `target`.
    n0, sigma2 : float

    Returns
    -------
    t : ndarray, shape (M,)
    q : ndarray, shape (M,), real
    singular : bool
        True when the Gram matrix needed the ``EPS`` regularisation
        (``n0 = 0`` with linearly dependent interferers).
    """
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    hl = h[:, target, :].T  # (M, Ne)
    yt = y.T
    t = np.einsum("mj,mj->m", hl.conj(), yt)
    q = np.real(np.einsum("mj,mj->m", hl.conj(), hl))
    interferers = list(interferers)
    if not interferers:
        return t, q, False
    hi = h[:, interferers, :].transpose(2, 0, 1)  # (M, Ne, Ki)
    ki = hi.shape[2]
    gram = np.einsum("mji,mjk->mik", hi.conj(), hi) + (n0 / sigma2) * np.eye(ki)
    singular = False
    if n0 == 0:
        sv = np.linalg.svd(gram, compute_uv=False)
        bad = sv[:, -1] <= EPS * np.maximum(sv[:, 0], 1e-300)
        if np.any(bad):
            singular = True
            scale = np.maximum(sv[:, 0], 1.0)
            gram = gram + (bad * EPS * scale)[:, None, None] * np.eye(ki)
    # h^H Hi and Hi^H [h, y]
    hl_hi = np.einsum("mj,mjk->mk", hl.conj(), hi)
    rhs = np.einsum("mjk,mjc->mkc", hi.conj(), np.stack([hl, yt], axis=-1))
    sol = np.linalg.solve(gram, rhs)  # (M, Ki, 2)
    q = q - np.real(np.einsum("mk,mk->m", hl_hi, sol[:, :, 0]))
    t = t - np.einsum("mk,mk->m", hl_hi, sol[:, :, 1])
    return t, np.maximum(q, 0.0), singular


def _biased(t, q, n0: float, sigma2: float):
    """``(xhat, gain)`` from noise-scaled MMSE terms."""
    den = n0 / sigma2 + q
    ok = den > 0
    safe = np.where(ok, den, 1.0)
    return np.where(ok, t / safe, 0.0), np.where(ok, q / safe, 0.0)


def mmse_detect_tone(tone: UplinkTone, l: int, interferers=None, scaled: bool = True) -> complex:
    """Linear MMSE estimate of UE `l` on one tone.

    ``scaled=True`` returns ``(1/sigma2 + h^H R^-1 h)^-1 h^H R^-1 y``;
    ``scaled=False`` returns the bare filter output ``h^H R^-1 y`` (needs
    ``n0 > 0``). `interferers` defaults to every other UE.
    """
    if not 0 <= l < tone.n_ues:
        raise IndexError(f"UE {l} out of range")
    if interferers is None:
        interferers = [i for i in range(tone.n_ues) if i != l]
    t, q, _ = mmse_terms(tone.y[:, None], tone.h[:, :, None], l, interferers,
                         tone.n0, tone.sigma2)
    if not scaled:
        if tone.n0 <= 0:
            raise ValueError("the unscaled filter output is unbounded at n0 = 0")
        return complex(t[0] / tone.n0)
    xhat, _ = _biased(t, q, tone.n0, tone.sigma2)
    return complex(xhat[0])


def tone_decider(order: int) -> Decider:
    """Per-tone decisions: unbias with the tone's own gain, then slice."""

    def decide(xhat, gain):
        soft = np.where(gain > 0, xhat / np.where(gain > 0, gain, 1.0), 0.0)
        return soft, qam_slice(soft, order)

    return decide


def block_decider(order: int) -> Decider:
    """DFT-spread block decisions.

    Despreads the MMSE tones, removes the average bias, slices in the symbol
    domain and spreads the decisions back to tones for cancellation.
    """

    def decide(xhat, gain):
        m = xhat.size
        bias = float(np.mean(gain))
        soft = idft(xhat, m) / (bias if bias > 0 else 1.0)
        return soft, dft(qam_slice(soft, order), m)

    return decide


def ssic_oo(y, h, n0: float, decide: Decider, sigma2: float = 1.0, genie=None):
    """Ordered successive interference cancellation over a block of tones.

    Parameters
    ----------
    y : ndarray, shape (Ne, M)
    h : ndarray, shape (Ne, K, M)
    n0 : float
    decide : callable
        ``decide(xhat, gain) -> (soft, remod)``; `xhat` are biased MMSE tone
        estimates and `gain` their per-tone bias ``q / (1/sigma2 + q)``.
    genie : ndarray, shape (K, M), optional
        True tone symbols, used for cancellation instead of decisions.

    Returns
    -------
    soft : ndarray, shape (K, M)
        Unbiased soft output of each UE, in UE index order.
    order : list of int
        Detection order.
    gains : ndarray, shape (K, M)
        Per-tone MMSE bias of each UE at its detection stage.
    """
    y = np.array(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if y.ndim != 2 or h.ndim != 3 or h.shape[0] != y.shape[0] or h.shape[2] != y.shape[1]:
        raise DimensionError(f"y {y.shape} and h {h.shape} are inconsistent")
    k, m = h.shape[1], y.shape[1]
    soft = np.zeros((k, m), dtype=complex)
    gains = np.zeros((k, m))
    remaining = list(range(k))
    order = []
    while remaining:
        pw = [float(np.sum(np.abs(h[:, i, :]) ** 2)) for i in remaining]
        l = remaining[int(np.argmax(pw))]
        others = [i for i in remaining if i != l]
        t, q, _ = mmse_terms(y, h, l, others, n0, sigma2)
        xhat, gains[l] = _biased(t, q, n0, sigma2)
        soft[l], remod = decide(xhat, gains[l])
        if others:
            ref = remod if genie is None else np.asarray(genie)[l]
            y -= h[:, l, :] * ref
        remaining.remove(l)
        order.append(l)
    return soft, order, gains


def ssic_oo_detect(tone: UplinkTone, order: int = 16, genie=None):
    """SSIC-OO on a single tone; returns ``(decisions, detection order)``."""
    soft, det_order, _ = ssic_oo(tone.y[:, None], tone.h[:, :, None], tone.n0,
                                 tone_decider(order), tone.sigma2,
                                 None if genie is None else np.asarray(genie)[:, None])
    return qam_slice(soft[:, 0], order), det_order
