"""
Frequency-selective Rayleigh channels for every link in the cell.

Links
-----
* eNB antenna ``j`` <-> UE ``l`` antenna ``k``: ``dl[l, j, k, :]``. The same taps
  serve both directions (reciprocity by shared storage).
* UE ``q`` -> UE ``l`` antenna ``k``: ``xlink[l, q, k, :]``. The transmitting side
  is the composite beam of UE ``q``; the diagonal ``q == l`` is zero.

Per-antenna taps at a UE are ``rho * common + sqrt(1 - rho**2) * private``. With
the default ``rho = 1`` every UE antenna sees exactly the same taps toward a
given eNB antenna.

Frequency responses use the plain (non-unitary) DFT of the zero-padded taps.
Because the modem uses unitary transforms on both sides, a circular
convolution with ``h`` shows up as a per-tone multiplication by that response.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .numerics import DimensionError, RngStream, complex_gaussian

__all__ = [
    "ChannelRealization",
    "draw_channels",
    "apply_channel",
    "freq_response",
    "write_channel_dump",
]


@dataclass(frozen=True)
class ChannelRealization:
    """Immutable set of tap vectors for one slot.

    Attributes
    ----------
    dl : ndarray, shape (K, Ne, Nr, L)
        eNB antenna to UE antenna taps, used for uplink and downlink alike.
    xlink : ndarray, shape (K, K, Nr, L)
        UE-to-UE taps, ``xlink[l, q]`` from UE ``q`` into UE ``l``.
    """

    dl: np.ndarray
    xlink: np.ndarray

    def __post_init__(self):
        dl = np.asarray(self.dl, dtype=complex)
        xl = np.asarray(self.xlink, dtype=complex)
        if dl.ndim != 4 or xl.ndim != 4:
            raise DimensionError("dl and xlink must both be 4-D")
        k, _, nr, nt = dl.shape
        if xl.shape != (k, k, nr, nt):
            raise DimensionError(f"xlink shape {xl.shape} does not match dl {dl.shape}")
        dl.setflags(write=False)
        xl.setflags(write=False)
        object.__setattr__(self, "dl", dl)
        object.__setattr__(self, "xlink", xl)

    @property
    def ul(self) -> np.ndarray:
        """Uplink taps; the very same array as :attr:`dl`."""
        return self.dl

    @property
    def n_ues(self) -> int:
        return self.dl.shape[0]

    @property
    def n_taps(self) -> int:
        return self.dl.shape[-1]


def _correlated(rng: RngStream, common: np.ndarray, n_ant: int, rho: float) -> np.ndarray:
    """Expand ``(..., L)`` common taps into ``(..., n_ant, L)`` per-antenna taps."""
    out = np.repeat(common[..., None, :], n_ant, axis=-2)
    if rho < 1.0:
        private = complex_gaussian(rng, out.shape, 1.0 / common.shape[-1])
        out = rho * out + np.sqrt(1.0 - rho**2) * private
    return out


def draw_channels(rng: RngStream, cfg) -> ChannelRealization:
    """Draw i.i.d. ``CN(0, 1/L)`` taps for every link.

    `cfg` provides ``n_ues``, ``n_enb_ant``, ``n_ue_ant``, ``n_taps``,
    ``n_subcarriers``, ``ue_corr_rho``, ``ue_xlink_gain_db`` and ``ue_gain_db``
    (per-UE amplitude scaling of the eNB links, in dB).
    """
    k, ne, nr, nt = cfg.n_ues, cfg.n_enb_ant, cfg.n_ue_ant, cfg.n_taps
    if min(k, ne, nr, nt) < 1:
        raise ValueError("all channel dimensions must be >= 1")
    if nt > cfg.n_subcarriers:
        raise ValueError("channel longer than the DFT size")
    rho = float(cfg.ue_corr_rho)
    if not 0.0 <= rho <= 1.0:
        raise ValueError("ue_corr_rho must lie in [0, 1]")

    link_rng = rng.child(0)
    common = complex_gaussian(link_rng, (k, ne, nt), 1.0 / nt)
    dl = _correlated(rng.child(1), common, nr, rho)
    gains = 10 ** (np.asarray(cfg.ue_gain_db, dtype=float) / 20.0)
    if gains.shape != (k,):
        raise DimensionError(f"ue_gain_db needs {k} entries")
    dl = dl * gains[:, None, None, None]

    # one draw per unordered UE pair keeps the UE-to-UE links reciprocal
    x_common = np.zeros((k, k, nt), dtype=complex)
    pairs = [(a, b) for a in range(k) for b in range(a + 1, k)]
    if pairs:
        draws = complex_gaussian(rng.child(2), (len(pairs), nt), 1.0 / nt)
        for (a, b), h in zip(pairs, draws):
            x_common[a, b] = x_common[b, a] = h
    x_common *= 10 ** (cfg.ue_xlink_gain_db / 20.0)
    xlink = _correlated(rng.child(3), x_common, nr, rho)
    xlink[np.arange(k), np.arange(k)] = 0.0
    return ChannelRealization(dl, xlink)


def apply_channel(sig, taps, rng: RngStream | None = None, n0: float = 0.0) -> np.ndarray:
    """Linear convolution of `sig` with `taps`, truncated to the input length.

    Both arrays broadcast over their leading axes; the last axis is time for
    `sig` and delay for `taps`. When the signal carries a cyclic prefix at
    least ``L - 1`` long, the body of the output is the circular convolution
    of the body with the taps. Adds ``CN(0, n0)`` noise when `n0` > 0.
    """
    sig = np.asarray(sig, dtype=complex)
    taps = np.asarray(taps, dtype=complex)
    n = sig.shape[-1]
    shape = np.broadcast_shapes(sig.shape[:-1], taps.shape[:-1]) + (n,)
    y = np.zeros(shape, dtype=complex)
    for b in range(min(taps.shape[-1], n)):
        y[..., b:] += taps[..., b : b + 1] * sig[..., : n - b]
    if n0 > 0:
        if rng is None:
            raise ValueError("noise requested without an rng stream")
        y += complex_gaussian(rng, shape, n0)
    return y


def freq_response(taps, n: int) -> np.ndarray:
    """Plain N-point DFT ``sum_b h[b] exp(-2j pi b m / N)`` along the last axis."""
    taps = np.asarray(taps, dtype=complex)
    if taps.shape[-1] > n:
        raise DimensionError(f"{taps.shape[-1]} taps do not fit in an {n}-point DFT")
    return np.fft.fft(taps, n, axis=-1)


def write_channel_dump(path, trial: int, ch: ChannelRealization, append: bool = True) -> None:
    """Append a realization to a CSV with columns ``trial,link,tap,re,im``."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh)
        if fh.tell() == 0:
            w.writerow(["trial", "link", "tap", "re", "im"])
        k, ne, nr, nt = ch.dl.shape
        for l in range(k):
            for j in range(ne):
                for a in range(nr):
                    for b in range(nt):
                        h = ch.dl[l, j, a, b]
                        w.writerow([trial, f"enb{j}-ue{l}.{a}", b, repr(float(h.real)), repr(float(h.imag))])
        for l in range(k):
            for q in range(k):
                if q == l:
                    continue
                for a in range(nr):
                    for b in range(nt):
                        h = ch.xlink[l, q, a, b]
                        w.writerow([trial, f"ue{q}-ue{l}.{a}", b, repr(float(h.real)), repr(float(h.imag))])
