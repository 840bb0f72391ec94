"""
Full-duplex self-interference (SI) and transmitter impairments.

Each transceiver (eNB or UE) has one transmit and one receive chain per
antenna. A receive chain picks up its own transmit chain through the shared
antenna ("self-talk") and its neighbouring transmit chains ("cross-talk").
Every transmit chain radiates three SI components:

* linear: the clean baseband drive signal,
* non-linear: power-amplifier distortion (Ghorbani AM/AM, AM/PM model),
* transmit noise: white noise at a fixed EVM below the drive signal.

A :class:`SicMode` selects which of the six (component, talk) terms the
canceller removes. Cancelled terms are left at a residual floor tied to the
thermal noise level; uncancelled terms pass untouched.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import constants

from .numerics import DimensionError, RngStream, complex_gaussian
from .channel import apply_channel

__all__ = [
    "SicMode",
    "PaModel",
    "pa_apply",
    "pa_split",
    "SiChannel",
    "draw_si_channel",
    "si_components",
    "add_self_interference",
    "tx_noise",
    "thermal_noise_power",
    "GHORBANI_AM",
    "GHORBANI_PM",
]

# Ghorbani & Sheikhan solid-state PA fit
GHORBANI_AM = (8.1081, 1.5413, 6.5202, -0.0718)
GHORBANI_PM = (4.6645, 2.0965, 10.88, -0.003)


class SicMode(str, enum.Enum):
    """Self-interference cancellation depth.

    NONE        nothing cancelled
    LINEAR      linear self-talk and cross-talk cancelled
    NL_NO_CTC   as LINEAR, plus non-linear self-talk
    FULL        every component cancelled down to the residual floor
    """

    NONE = "none"
    LINEAR = "linear"
    NL_NO_CTC = "nl-no-ctc"
    FULL = "full"

    @property
    def cancelled(self) -> frozenset[tuple[str, str]]:
        return _CANCELLED[self]


_ALL_TERMS = frozenset(
    (comp, talk) for comp in ("linear", "nonlinear", "txnoise") for talk in ("self", "cross")
)
_CANCELLED = {
    SicMode.NONE: frozenset(),
    SicMode.LINEAR: frozenset({("linear", "self"), ("linear", "cross")}),
    SicMode.NL_NO_CTC: frozenset({("linear", "self"), ("linear", "cross"), ("nonlinear", "self")}),
    SicMode.FULL: _ALL_TERMS,
}


def thermal_noise_power(bandwidth_hz: float, temp_k: float = 290.0) -> float:
    """Thermal noise power ``k_B * T * B`` in watts."""
    if bandwidth_hz < 0 or temp_k <= 0:
        raise ValueError("bandwidth must be >= 0 and temperature > 0")
    return constants.k * temp_k * bandwidth_hz


@dataclass(frozen=True)
class PaModel:
    """Ghorbani memoryless PA.

    ``A(r) = x1 r^x2 / (1 + x3 r^x2) + x4 r`` and
    ``Phi(r) = y1 r^y2 / (1 + y3 r^y2) + y4 r``.

    The drive level is set by `ibo_db`, the input back-off of the signal RMS
    below the saturation input amplitude (argmax of ``A``; unit amplitude when
    ``A`` has no interior maximum).
    """

    am: tuple[float, float, float, float] = GHORBANI_AM
    pm: tuple[float, float, float, float] = GHORBANI_PM
    ibo_db: float = 21.0

    def __post_init__(self):
        object.__setattr__(self, "am", tuple(float(v) for v in self.am))
        object.__setattr__(self, "pm", tuple(float(v) for v in self.pm))
        object.__setattr__(self, "_r_sat", self._find_saturation())
        r_sat = self._r_sat
        # the Ghorbani fit goes slightly negative for r << r_sat, so only the
        # operating range above 1% of saturation is required to be monotone
        grid = np.linspace(0.01 * r_sat, r_sat, 2001)
        if np.any(np.diff(self.am_am(grid)) < -1e-12):
            raise ValueError("AM/AM characteristic is not monotone over the operating range")

    def am_am(self, r):
        x1, x2, x3, x4 = self.am
        r = np.asarray(r, dtype=float)
        rp = r**x2
        return x1 * rp / (1.0 + x3 * rp) + x4 * r

    def am_pm(self, r):
        y1, y2, y3, y4 = self.pm
        r = np.asarray(r, dtype=float)
        rp = r**y2
        return y1 * rp / (1.0 + y3 * rp) + y4 * r

    def saturation_input(self) -> float:
        """Input amplitude at the peak of ``A``; 1 when ``A`` keeps rising."""
        return self._r_sat

    def _find_saturation(self) -> float:
        grid = np.linspace(1e-4, 20.0, 200001)
        a = self.am_am(grid)
        k = int(np.argmax(a))
        if k == grid.size - 1:
            return 1.0
        return float(grid[k])

    @property
    def operating_rms(self) -> float:
        return self.saturation_input() * 10 ** (-self.ibo_db / 20.0)


def pa_apply(s, pa: PaModel) -> np.ndarray:
    """Pass a signal through the PA; output is normalised to unit linear gain.

    The signal is scaled so its RMS sits at the model's operating point, the
    AM/AM and AM/PM curves are applied per sample, and the result is divided
    by the least-squares linear gain so that ``pa_apply(s) = s + d`` with the
    distortion ``d`` uncorrelated with ``s``. Operates along the last axis; each
    row is normalised separately.
    """
    s = np.asarray(s, dtype=complex)
    rms = np.sqrt(np.mean(np.abs(s) ** 2, axis=-1, keepdims=True))
    safe = np.where(rms > 0, rms, 1.0)
    drive = s * (pa.operating_rms / safe)
    r = np.abs(drive)
    out = pa.am_am(r) * np.exp(1j * (np.angle(drive) + pa.am_pm(r)))
    num = np.sum(out * drive.conj(), axis=-1, keepdims=True)
    den = np.sum(np.abs(drive) ** 2, axis=-1, keepdims=True)
    gain = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)
    y = out / gain * (safe / pa.operating_rms)
    return np.where(rms > 0, y, 0.0)


def pa_split(s, pa: PaModel | None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(linear, distortion)`` parts of the PA output for drive `s`."""
    s = np.asarray(s, dtype=complex)
    if pa is None:
        return s, np.zeros_like(s)
    return s, pa_apply(s, pa) - s


def tx_noise(rng: RngStream, s, evm_db: float | None) -> np.ndarray:
    """White transmit noise `evm_db` below the per-row power of `s`."""
    s = np.asarray(s, dtype=complex)
    if evm_db is None:
        return np.zeros_like(s)
    p = np.mean(np.abs(s) ** 2, axis=-1, keepdims=True)
    w = complex_gaussian(rng, s.shape, 1.0)
    return w * np.sqrt(p * 10 ** (evm_db / 10.0))


@dataclass(frozen=True)
class SiChannel:
    """Coupling taps from transmit chain ``t`` to receive chain ``r``.

    ``taps[r, t, :]`` is the impulse response; the diagonal is self-talk,
    off-diagonal entries are cross-talk (neighbouring chains only, zero
    elsewhere). `si_db` is the linear self-talk power above the desired
    signal at each receive chain.
    """

    taps: np.ndarray
    si_db: float = 60.0

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=complex)
        if t.ndim != 3 or t.shape[0] != t.shape[1]:
            raise DimensionError("SI taps must have shape (chains, chains, taps)")
        object.__setattr__(self, "taps", t)

    @property
    def n_chains(self) -> int:
        return self.taps.shape[0]

    def talk_mask(self, talk: str) -> np.ndarray:
        eye = np.eye(self.n_chains, dtype=bool)
        return eye if talk == "self" else ~eye


def draw_si_channel(rng: RngStream, n_chains: int, n_taps: int = 2, xtalk_db: float = -10.0,
                    si_db: float = 60.0) -> SiChannel:
    """Random near-field coupling: unit-power self-talk, neighbour cross-talk at `xtalk_db`."""
    if n_taps < 1 or n_chains < 1:
        raise ValueError("need at least one chain and one tap")
    if xtalk_db > 0:
        raise ValueError("cross-talk must not exceed self-talk power")
    taps = complex_gaussian(rng, (n_chains, n_chains, n_taps), 1.0 / n_taps)
    rows, cols = np.indices((n_chains, n_chains))
    gain = np.where(rows == cols, 1.0, np.where(np.abs(rows - cols) == 1, 10 ** (xtalk_db / 20.0), 0.0))
    return SiChannel(taps * gain[..., None], si_db=si_db)


def si_components(si: SiChannel, linear, nonlinear, txnoise, scale: float) -> dict[tuple[str, str], np.ndarray]:
    """Received SI split into its six (component, talk) terms.

    `linear`, `nonlinear` and `txnoise` have shape ``(chains, samples)`` and are
    the three parts of what each transmit chain radiates.
    """
    parts = {"linear": linear, "nonlinear": nonlinear, "txnoise": txnoise}
    out = {}
    for comp, sig in parts.items():
        sig = np.asarray(sig, dtype=complex)
        if sig.shape[0] != si.n_chains:
            raise DimensionError(f"{comp} has {sig.shape[0]} chains, SI channel has {si.n_chains}")
        for talk in ("self", "cross"):
            taps = si.taps * si.talk_mask(talk)[..., None] * scale
            out[(comp, talk)] = apply_channel(sig[None, :, :], taps).sum(axis=1)
    return out


def add_self_interference(rx, linear, nonlinear, txnoise, si: SiChannel, mode: SicMode,
                          n0: float, signal_power: float, residual_db: float = -20.0,
                          return_residual: bool = False):
    """Add post-cancellation SI to the receive chains.

    Parameters
    ----------
    rx : ndarray, shape (chains, samples)
        Receive-chain signals before SI.
    linear, nonlinear, txnoise : ndarray, shape (chains, samples)
        Components radiated by this transceiver's own transmit chains.
    si : SiChannel
    mode : SicMode
    n0 : float
        Thermal noise variance per sample; sets the residual floor.
    signal_power : float
        Desired-signal power per receive chain; the linear self-talk is
        scaled to ``si.si_db`` above it.
    residual_db : float
        Power of what remains of the cancelled terms, relative to `n0`.
    """
    rx = np.asarray(rx, dtype=complex)
    mode = SicMode(mode)
    p_tx = float(np.mean(np.abs(np.asarray(linear)) ** 2))
    if p_tx == 0 or signal_power <= 0:
        return (rx, np.zeros_like(rx)) if return_residual else rx
    self_gain = np.mean(np.sum(np.abs(si.taps[np.arange(si.n_chains), np.arange(si.n_chains)]) ** 2, axis=-1))
    scale = np.sqrt(10 ** (si.si_db / 10.0) * signal_power / (p_tx * self_gain))
    comps = si_components(si, linear, nonlinear, txnoise, scale)
    if rx.shape != next(iter(comps.values())).shape:
        raise DimensionError("receive chains and SI shapes differ")

    kept = sum((c for key, c in comps.items() if key not in mode.cancelled), np.zeros_like(rx))
    removed = sum((c for key, c in comps.items() if key in mode.cancelled), np.zeros_like(rx))
    p_removed = float(np.mean(np.abs(removed) ** 2))
    floor = n0 * 10 ** (residual_db / 10.0)
    leak = min(1.0, np.sqrt(floor / p_removed)) if p_removed > 0 else 0.0
    residual = kept + leak * removed
    return (rx + residual, residual) if return_residual else rx + residual
