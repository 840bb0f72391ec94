"""
One simulated slot of the full-duplex cell, end to end.

Signal model
------------
UE ``l`` antenna ``k`` receives::

    y_lk = a_k(psi_e,l) * (sum_j h_ljk * s_j + n_lk)
         + a_k(psi_q,l) * sum_q g_lqk * c_q
         + SI residual of UE l's own transmit chains

where ``s_j`` is what eNB antenna ``j`` radiates, ``c_q = sum_k' t_qk'`` is the
composite radiated by UE ``q`` and ``a_k`` the steering phase. UE ``q`` is seen
from every other UE under its own eNB angle ``psi_e,q``, so the beam toward the
eNB with nulls on the other UEs' angles is what keeps the cross-link out.

The eNB antenna ``j`` receives ``sum_i sum_k h_ijk * t_ik + n_j`` plus its own SI
residual, with the same taps as the downlink.

Every transmit chain radiates ``drive + PA distortion + transmit noise``.

Noise level and SNR
-------------------
SNR is the average per-tone received symbol energy at the reference UE over
``n0``. In the downlink that energy is ``E|E_l beta_l|^2`` (after beam and
precoder gains); in the uplink it is the per-eNB-antenna ``E|H_j,l|^2``. Both
averages are estimated once per scenario from a fixed set of channel draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .channel import ChannelRealization, apply_channel, draw_channels, freq_response
from .config import ScenarioConfig
from .downlink import build_precoders, mmse_equalize_diag, precode_and_superpose, ue_post_process
from .impairments import SicMode, add_self_interference, draw_si_channel, pa_split, tx_noise
from .modem import (dft_despread, dft_spread, demap_subcarriers, map_subcarriers, qam_demap_hard,
                    qam_map, strip_cp_and_dft, to_time_with_cp)
from .numerics import RngStream, complex_gaussian
from .smart_antenna import (BeamformerState, DoaEstimationError, array_snapshots, clms_train,
                            quiescent_weights, root_music_doa, steering_matrix, steering_vector)
from .uplink import block_decider, ssic_oo

__all__ = [
    "UeLink",
    "SlotResult",
    "trial_stream",
    "ue_beams",
    "effective_channels",
    "signal_energy",
    "noise_level",
    "run_slot",
]

# child stream keys
_BITS, _CHAN, _NOISE, _SI, _TRAIN, _TXN, _CALIB = range(1, 8)
SINR_CAP_DB = 300.0


@dataclass
class UeLink:
    """Outcome of one UE's stream in one direction."""

    bits: int
    errors: int
    sinr: float
    tone_sinr: np.ndarray
    interference_ratio: float = 0.0


@dataclass
class SlotResult:
    downlink: dict[int, UeLink] = field(default_factory=dict)
    uplink: dict[int, UeLink] = field(default_factory=dict)
    detection_order: list[int] = field(default_factory=list)
    flagged_tones: int = 0
    doa_failures: int = 0


def trial_stream(cfg: ScenarioConfig, trial: int) -> RngStream:
    """Random stream of one Monte Carlo trial; independent of SNR point."""
    return RngStream(cfg.seed).child(trial)


# beams ---------------------------------------------------------------------

@lru_cache(maxsize=4096)
def _train_beams(n_r, spacing, doas, snap, snap_snr, mu, iters, mode, null_others, seed, stream):
    rng = RngStream(seed, stream)
    k = len(doas)
    beams, failures = [], 0
    for l in range(k):
        if not null_others:
            a = steering_matrix([doas[l]], n_r, spacing)
            w = quiescent_weights(a)
            beams.append(BeamformerState(w, a, np.ones(1, complex), 0.0, 0, 0.0, np.array([doas[l]])))
            continue
        order = [l] + [q for q in range(k) if q != l]
        true = np.array([doas[q] for q in order])
        x = array_snapshots(rng.child(l), true, n_r, spacing, snap, snap_snr)
        angles = true
        if mode == "estimated":
            try:
                est = root_music_doa(x, k, spacing)
                # associate each estimate with the nearest true direction
                angles = np.array([est[np.argmin(np.abs(est - t))] for t in true])
                if len(set(angles.tolist())) < k:
                    raise DoaEstimationError("two directions resolved to one estimate")
            except DoaEstimationError:
                failures += 1
                angles = true
        a = steering_matrix(angles, n_r, spacing)
        beams.append(clms_train(a, x, mu, iters, doas=angles))
    return tuple(beams), failures


def ue_beams(cfg: ScenarioConfig, rng: RngStream, null_others: bool = True):
    """Per-UE beams toward the eNB; with `null_others`, nulls on the other UEs.

    Returns ``(beams, doa_failures)``. Without nulls the beam is the quiescent
    single-constraint weight vector.
    """
    return _train_beams(cfg.n_ue_ant, cfg.spacing_wl, tuple(cfg.doa_enb_rad.tolist()),
                        cfg.snapshots, cfg.snapshot_snr_db, cfg.clms_mu, cfg.clms_iters,
                        cfg.doa_mode, null_others, rng.seed, rng.stream_id)


def effective_channels(cfg: ScenarioConfig, ch: ChannelRealization, beams) -> np.ndarray:
    """Per-tone channel between each eNB antenna and each UE's beam.

    ``h[l, j, n] = sum_k a_k(psi_e,l) w_lk H_ljk(n)``, shape (K, Ne, N). By
    reciprocity this is both UE ``l``'s downlink row and its uplink column.
    """
    looks = steering_vector(cfg.doa_enb_rad, cfg.n_ue_ant, cfg.spacing_wl)
    w = np.stack([b.weights for b in beams])
    return np.einsum("ljkn,lk->ljn", freq_response(ch.dl, cfg.n_subcarriers), looks * w)


# SNR calibration ------------------------------------------------------------

@lru_cache(maxsize=256)
def signal_energy(cfg: ScenarioConfig, direction: str) -> float:
    """Average per-tone received symbol energy at the reference UE."""
    if direction not in ("downlink", "uplink"):
        raise ValueError(f"unknown direction {direction!r}")
    base = RngStream(cfg.seed).child(2**63 + _CALIB)
    acc = 0.0
    idx = cfg.alloc.index_array
    for d in range(cfg.calib_draws):
        rng = base.child(d)
        ch = draw_channels(rng.child(_CHAN), cfg)
        beams, _ = ue_beams(cfg.replace(doa_mode="oracle"), rng.child(_TRAIN))
        h = effective_channels(cfg, ch, beams)[:, :, idx]
        if direction == "downlink":
            ps = build_precoders(h.transpose(2, 0, 1), "equal", cfg.tone_power)
            acc += float(np.mean(ps.e_tilde[:, cfg.ref_ue] ** 2))
        else:
            acc += float(np.mean(np.abs(h[cfg.ref_ue]) ** 2))
    return acc / cfg.calib_draws


def noise_level(cfg: ScenarioConfig, snr_db: float, direction: str) -> float:
    """``n0`` giving `snr_db` at the reference UE; ``inf`` dB gives zero."""
    if np.isposinf(snr_db):
        return 0.0
    return signal_energy(cfg, direction) * 10 ** (-snr_db / 10.0)


# the slot ---------------------------------------------------------------------

def _sinr(est, ref) -> float:
    mse = float(np.mean(np.abs(est - ref) ** 2))
    return 10 ** (SINR_CAP_DB / 10) if mse == 0 else min(1.0 / mse, 10 ** (SINR_CAP_DB / 10))


def _correlated_noise(rng: RngStream, n_ant: int, n: int, n0: float, rho: float) -> np.ndarray:
    common = complex_gaussian(rng.child(0), n, n0)
    out = np.repeat(common[None, :], n_ant, axis=0)
    if rho < 1.0:
        out = rho * out + np.sqrt(1.0 - rho**2) * complex_gaussian(rng.child(1), (n_ant, n), n0)
    return out


def _radiate(rng: RngStream, drive, cfg: ScenarioConfig):
    lin, nl = pa_split(drive, cfg.pa)
    tn = tx_noise(rng, drive, cfg.tx_evm_db)
    return lin, nl, tn


def run_slot(cfg: ScenarioConfig, rng: RngStream, n0: float, dl_ues=None, ul_ues=None, *,
             null_others: bool = True, si_enabled: bool | None = None,
             sic_mode: SicMode | None = None, measure=("downlink", "uplink")) -> SlotResult:
    """Simulate one slot.

    Parameters
    ----------
    cfg : ScenarioConfig
    rng : RngStream
        Trial stream; bits, channels, noise, SI and beam training use
        separate children so runs that differ only in impairment switches
        see identical draws.
    n0 : float
        Thermal noise variance per sample (and per tone).
    dl_ues, ul_ues : sequence of int, optional
        UEs served in each direction; all UEs by default.
    null_others : bool
        Train UE beams with nulls on the other UEs (else quiescent beams).
    si_enabled, sic_mode : optional
        Override the config.
    measure : sequence of str
        Receivers to evaluate. Both directions always transmit, so skipping
        a receiver changes nothing else.
    """
    k_all = cfg.n_ues
    dl_ues = list(range(k_all)) if dl_ues is None else list(dl_ues)
    ul_ues = list(range(k_all)) if ul_ues is None else list(ul_ues)
    si_enabled = cfg.si_enabled if si_enabled is None else si_enabled
    mode = cfg.sic_mode if sic_mode is None else SicMode(sic_mode)
    ne, nr, n, cp = cfg.n_enb_ant, cfg.n_ue_ant, cfg.n_subcarriers, cfg.cp_len
    alloc, order = cfg.alloc, cfg.mod_order
    bps = int(np.log2(order))
    m = alloc.m
    ncp = n + cp
    res = SlotResult()

    ch = draw_channels(rng.child(_CHAN), cfg)
    beams, res.doa_failures = ue_beams(cfg, rng.child(_TRAIN), null_others)
    h_eff = effective_channels(cfg, ch, beams)[:, :, alloc.index_array]  # (K, Ne, M)
    looks = steering_vector(cfg.doa_enb_rad, nr, cfg.spacing_wl)  # (K, Nr)
    brng = rng.child(_BITS)

    # eNB transmit
    dl_bits, dl_x, ps = {}, {}, None
    zeros_enb = np.zeros((ne, ncp), dtype=complex)
    lin_d = nl_d = tn_d = zeros_enb
    if dl_ues:
        for l in dl_ues:
            dl_bits[l] = brng.child(0, l).bits(m * bps)
            dl_x[l] = qam_map(dl_bits[l], order)
        xbar = np.stack([dft_spread(dl_x[l]) for l in dl_ues])
        ps = build_precoders(h_eff[dl_ues].transpose(2, 0, 1), cfg.power_policy, cfg.tone_power,
                             n0 if n0 > 0 else None)
        res.flagged_tones = int(np.sum(ps.flagged))
        s_d = to_time_with_cp(precode_and_superpose(xbar, ps, alloc), cp, cfg.n_taps)
        lin_d, nl_d, tn_d = _radiate(rng.child(_TXN, 0), s_d, cfg)
    rad_d = lin_d + nl_d + tn_d

    # UE transmit
    ul_bits, ul_x, ul_parts = {}, {}, {}
    for i in ul_ues:
        ul_bits[i] = brng.child(1, i).bits(m * bps)
        ul_x[i] = qam_map(ul_bits[i], order)
        s_u = to_time_with_cp(map_subcarriers(dft_spread(ul_x[i]), alloc), cp, cfg.n_taps)
        drive = (looks[i] * beams[i].weights)[:, None] * s_u
        ul_parts[i] = _radiate(rng.child(_TXN, 1 + i), drive, cfg)
    rad_u = {i: sum(p) for i, p in ul_parts.items()}

    # UE receive
    for l in dl_ues if "downlink" in measure else ():
        w = beams[l].weights
        pos = dl_ues.index(l)
        desired = np.stack([looks[l, kk] * apply_channel(rad_d, ch.dl[l, :, kk]).sum(axis=0)
                            for kk in range(nr)])
        clean = np.stack([looks[l, kk] * apply_channel(lin_d, ch.dl[l, :, kk]).sum(axis=0)
                          for kk in range(nr)])
        xlink = np.zeros((nr, ncp), dtype=complex)
        for q in ul_ues:
            if q == l:
                continue
            steer_q = steering_vector(cfg.doa_enb_rad[q], nr, cfg.spacing_wl)
            comp = rad_u[q].sum(axis=0)
            xlink += steer_q[:, None] * apply_channel(comp[None, :], ch.xlink[l, q])
        noise = looks[l][:, None] * _correlated_noise(rng.child(_NOISE, 0, l), nr, ncp, n0,
                                                       cfg.ue_corr_rho)
        si_res = np.zeros((nr, ncp), dtype=complex)
        if si_enabled and l in ul_ues:
            si = draw_si_channel(rng.child(_SI, 1 + l), nr, cfg.si_taps, cfg.si_xtalk_db, cfg.si_db)
            p_sig = float(np.mean(np.abs(clean) ** 2))
            _, si_res = add_self_interference(np.zeros((nr, ncp), complex), *ul_parts[l], si, mode,
                                              n0, p_sig, cfg.sic_residual_db, return_residual=True)
        y_quiet = w @ (desired + xlink + si_res)
        y = y_quiet + w @ noise
        e_t = ps.e_tilde[:, pos]
        u = ps.u[:, pos]
        yhat = ue_post_process(demap_subcarriers(strip_cp_and_dft(y, n, cp), alloc), u)
        yhat_q = ue_post_process(demap_subcarriers(strip_cp_and_dft(y_quiet, n, cp), alloc), u)
        rho = cfg.ue_corr_rho
        gain = looks[l] @ w
        noise_gain = rho**2 * abs(gain) ** 2 + (1 - rho**2) * float(np.sum(np.abs(w) ** 2))
        n_eff = n0 * noise_gain
        xeq = mmse_equalize_diag(yhat, e_t, n_eff)
        bias = float(np.mean(e_t**2 / (e_t**2 + n_eff))) if np.any(e_t > 0) else 1.0
        soft = dft_despread(xeq) / bias
        rx_bits = qam_demap_hard(soft, order)
        r_int = yhat_q - e_t * dft_spread(dl_x[l])
        tone_sinr = e_t**2 / np.maximum(n_eff + np.abs(r_int) ** 2, 1e-300)
        p_des = float(np.mean(np.abs(w @ clean) ** 2))
        p_x = float(np.mean(np.abs(w @ xlink) ** 2))
        res.downlink[l] = UeLink(dl_bits[l].size, int(np.sum(rx_bits != dl_bits[l])),
                                 _sinr(soft, dl_x[l]), tone_sinr,
                                 p_x / p_des if p_des > 0 else 0.0)

    # eNB receive
    if ul_ues and "uplink" in measure:
        y_ul = np.zeros((ne, ncp), dtype=complex)
        clean = np.zeros((ne, ncp), dtype=complex)
        for i in ul_ues:
            lin_u = ul_parts[i][0]
            for j in range(ne):
                y_ul[j] += apply_channel(rad_u[i], ch.dl[i, j]).sum(axis=0)
                clean[j] += apply_channel(lin_u, ch.dl[i, j]).sum(axis=0)
        if si_enabled and dl_ues:
            si = draw_si_channel(rng.child(_SI, 0), ne, cfg.si_taps, cfg.si_xtalk_db, cfg.si_db)
            y_ul = add_self_interference(y_ul, lin_d, nl_d, tn_d, si, mode, n0,
                                         float(np.mean(np.abs(clean) ** 2)), cfg.sic_residual_db)
        y_ul = y_ul + complex_gaussian(rng.child(_NOISE, 1), (ne, ncp), n0)
        ybar = demap_subcarriers(strip_cp_and_dft(y_ul, n, cp), alloc)  # (Ne, M)
        hu = h_eff[ul_ues].transpose(1, 0, 2)  # (Ne, Ku, M)
        genie = np.stack([dft_spread(ul_x[i]) for i in ul_ues]) if cfg.genie_sic else None
        soft, det, _ = ssic_oo(ybar, hu, n0, block_decider(order), genie=genie)
        res.detection_order = [ul_ues[i] for i in det]
        for pos, i in enumerate(ul_ues):
            rx_bits = qam_demap_hard(soft[pos], order)
            res.uplink[i] = UeLink(ul_bits[i].size, int(np.sum(rx_bits != ul_bits[i])),
                                   _sinr(soft[pos], ul_x[i]), np.zeros(0))
    return res
