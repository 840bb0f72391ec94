"""
Monte Carlo experiments and result files.

Every trial owns a random stream keyed by ``(seed, trial)``; trials are
evaluated in fixed-size chunks and merged in trial order, so results do not
depend on the number of worker processes. Early stopping is only checked on
chunk boundaries for the same reason.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .impairments import SicMode
from .numerics import RngStream
from .slot import noise_level, run_slot, trial_stream
from .smart_antenna import (DoaEstimationError, array_gain, array_snapshots, clms_train,
                            root_music_doa, steering_matrix)

__all__ = [
    "BerRecord",
    "SeRecord",
    "DoaRecord",
    "wilson_interval",
    "run_ber",
    "run_spectral_efficiency",
    "run_doa_experiment",
    "emit_results",
    "read_results",
    "CHUNK",
]

log = logging.getLogger(__name__)

CHUNK = 16


@dataclass(frozen=True)
class BerRecord:
    experiment: str
    snr_db: float
    ue: int
    ber: float
    ci_lo: float
    ci_hi: float
    bits: int
    errors: int
    seed: int
    sinr_db: float


@dataclass(frozen=True)
class SeRecord:
    scheme: str
    snr_db: float
    se_bps_hz: float
    seed: int


@dataclass(frozen=True)
class DoaRecord:
    ue: int
    source_deg: float
    rmse_deg: float
    null_depth_db_median: float
    null_below_30db_frac: float
    failures: int
    trials: int
    seed: int


RECORD_TYPES = {"ber": BerRecord, "se": SeRecord, "doa": DoaRecord}


def wilson_interval(errors: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    if not 0 <= errors <= n:
        raise ValueError("errors must lie in [0, n]")
    p = errors / n
    z2 = z * z
    centre = (p + z2 / (2 * n)) / (1 + z2 / n)
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n)
    lo = 0.0 if errors == 0 else max(0.0, min(p, centre - half))
    hi = 1.0 if errors == n else min(1.0, max(p, centre + half))
    return lo, hi


# BER -------------------------------------------------------------------

def _ber_chunk(args):
    cfg, direction, n0, trials, overrides = args
    out = []
    for t in trials:
        r = run_slot(cfg, trial_stream(cfg, t), n0, measure=(direction,), **overrides)
        links = r.downlink if direction == "downlink" else r.uplink
        out.append({ue: (v.errors, v.bits, v.sinr) for ue, v in links.items()})
    return out


def _chunks(start: int, stop: int):
    return [range(a, min(a + CHUNK, stop)) for a in range(start, stop, CHUNK)]


def run_ber(cfg: ScenarioConfig, direction: str, *, snr_grid=None, trials: int | None = None,
            max_errors: int | None = None, si_enabled: bool | None = None,
            sic_mode: SicMode | None = None, experiment: str | None = None,
            workers: int = 1, dump_channels=None) -> list[BerRecord]:
    """BER per UE and SNR point.

    A point stops early once every UE has at least `max_errors` errors.
    `dump_channels` names a CSV that receives every trial's channel taps at
    the first SNR point.
    """
    if direction not in ("downlink", "uplink"):
        raise ValueError(f"unknown direction {direction!r}")
    cfg.check()
    grid = cfg.snr_grid if snr_grid is None else np.asarray(snr_grid, dtype=float)
    trials = cfg.trials if trials is None else trials
    max_errors = cfg.max_errors if max_errors is None else max_errors
    overrides = {"si_enabled": si_enabled, "sic_mode": sic_mode}
    experiment = experiment or f"ber-{direction}"
    records = []
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for p, snr in enumerate(grid):
            t0 = time.perf_counter()
            n0 = noise_level(cfg, float(snr), direction)
            err, bits, sinr = {}, {}, {}
            done = 0
            batches = _chunks(0, trials)
            step = max(1, workers)
            for b in range(0, len(batches), step):
                group = batches[b : b + step]
                jobs = [(cfg, direction, n0, list(g), overrides) for g in group]
                results = pool.map(_ber_chunk, jobs) if pool else map(_ber_chunk, jobs)
                stop = False
                # merge chunk by chunk so the stopping point matches a serial run
                for g, chunk in zip(group, results):
                    for trial in chunk:
                        for ue, (e, n, s) in trial.items():
                            err[ue] = err.get(ue, 0) + e
                            bits[ue] = bits.get(ue, 0) + n
                            sinr.setdefault(ue, []).append(s)
                    done += len(g)
                    if err and min(err.values()) >= max_errors:
                        stop = True
                        break
                if stop:
                    break
            if dump_channels is not None and p == 0:
                _dump(cfg, range(done), dump_channels)
            for ue in sorted(err):
                lo, hi = wilson_interval(err[ue], bits[ue])
                records.append(BerRecord(experiment, float(snr), ue, err[ue] / bits[ue], lo, hi,
                                         bits[ue], err[ue], cfg.seed,
                                         float(10 * np.log10(np.mean(sinr[ue])))))
            log.info("%s snr=%.2f dB: %d trials in %.2f s", experiment, snr, done,
                     time.perf_counter() - t0)
    finally:
        if pool:
            pool.shutdown()
    return records


def _dump(cfg, trials, path):
    from .channel import draw_channels, write_channel_dump
    from .slot import _CHAN

    Path(path).unlink(missing_ok=True)
    for t in trials:
        write_channel_dump(path, t, draw_channels(trial_stream(cfg, t).child(_CHAN), cfg))


# spectral efficiency -------------------------------------------------

def _se(links, n: int) -> float:
    return float(sum(np.sum(np.log2(1.0 + v.tone_sinr)) for v in links.values())) / n


def _se_trial(cfg: ScenarioConfig, scheme: str, t: int, n0: float) -> float:
    k = cfg.n_ues
    rng = trial_stream(cfg, t)
    full = {"measure": ("downlink",)}
    if scheme == "fd":
        r = run_slot(cfg, rng, n0, sic_mode=SicMode.FULL, **full)
        return _se(r.downlink, cfg.n_subcarriers)
    if scheme == "hd-tdd":
        # one UE per slot, and the slot is shared between the two directions
        r = run_slot(cfg, rng, n0, dl_ues=[t % k], ul_ues=[], si_enabled=False,
                     null_others=False, **full)
        return 0.5 * _se(r.downlink, cfg.n_subcarriers)
    if scheme == "alternating":
        # half-duplex UEs in opposite directions, swapping every slot
        r = run_slot(cfg, rng, n0, dl_ues=[t % k], ul_ues=[(t + 1) % k], null_others=False,
                     sic_mode=SicMode.FULL, **full)
        return _se(r.downlink, cfg.n_subcarriers)
    raise ValueError(f"unknown scheme {scheme!r}")


def _se_chunk(args):
    cfg, scheme, trials, n0 = args
    return [_se_trial(cfg, scheme, t, n0) for t in trials]


def run_spectral_efficiency(cfg: ScenarioConfig, *, snr_grid=None, trials: int | None = None,
                            workers: int = 1) -> list[SeRecord]:
    """Downlink SE per cell, ``(1/N) sum_tones sum_UE log2(1 + SINR)``, per scheme.

    The noise level is set once per SNR point from the full-duplex downlink
    calibration and shared by all schemes, so single-UE schemes enjoy the
    extra power they do not split.
    """
    cfg.check()
    grid = cfg.snr_grid if snr_grid is None else np.asarray(snr_grid, dtype=float)
    trials = cfg.trials if trials is None else trials
    records = []
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for snr in grid:
            n0 = noise_level(cfg, float(snr), "downlink")
            for scheme in cfg.schemes:
                jobs = [(cfg, scheme, list(c), n0) for c in _chunks(0, trials)]
                results = pool.map(_se_chunk, jobs) if pool else map(_se_chunk, jobs)
                vals = [v for chunk in results for v in chunk]
                records.append(SeRecord(scheme, float(snr), float(np.mean(vals)), cfg.seed))
    finally:
        if pool:
            pool.shutdown()
    return records


# DoA -------------------------------------------------------------------------

def run_doa_experiment(cfg: ScenarioConfig, *, trials: int | None = None,
                       snapshot_snr_db: float | None = None) -> list[DoaRecord]:
    """Root-MUSIC accuracy and the null depth of beams built on the estimates.

    Each UE observes every UE's eNB direction. ``snapshot_snr_db = inf`` gives
    noiseless snapshots. Null depth is the trained pattern at a true
    interferer angle relative to the true look angle.
    """
    cfg.check()
    trials = cfg.trials if trials is None else trials
    snr = cfg.snapshot_snr_db if snapshot_snr_db is None else snapshot_snr_db
    snr = None if np.isposinf(snr) else snr
    doas = cfg.doa_enb_rad
    k = cfg.n_ues
    records = []
    base = RngStream(cfg.seed).child(2**62)
    for l in range(k):
        order = [l] + [q for q in range(k) if q != l]
        true = doas[order]
        sq_err = np.zeros(k)
        nulls = [[] for _ in range(k)]
        failures = 0
        valid = 0
        for t in range(trials):
            x = array_snapshots(base.child(l, t), true, cfg.n_ue_ant, cfg.spacing_wl,
                                cfg.snapshots, snr)
            try:
                est = root_music_doa(x, k, cfg.spacing_wl)
            except DoaEstimationError:
                failures += 1
                continue
            matched = np.array([est[np.argmin(np.abs(est - a))] for a in true])
            if len(set(matched.tolist())) < k:
                failures += 1
                continue
            valid += 1
            sq_err += np.rad2deg(matched - true) ** 2
            beam = clms_train(steering_matrix(matched, cfg.n_ue_ant, cfg.spacing_wl), x,
                              cfg.clms_mu, cfg.clms_iters)
            g = np.abs(array_gain(beam.weights, true, cfg.spacing_wl)) ** 2
            for s in range(1, k):
                nulls[s].append(10 * np.log10(max(g[s], 1e-300) / g[0]))
        rmse = np.sqrt(sq_err / valid) if valid else np.full(k, np.nan)
        for s in range(k):
            depth = np.asarray(nulls[s])
            med = float(np.median(depth)) if depth.size else float("nan")
            frac = float(np.mean(depth < -30.0)) if depth.size else float("nan")
            records.append(DoaRecord(l, float(np.rad2deg(true[s])), float(rmse[s]), med, frac,
                                     failures, trials, cfg.seed))
    return records


# result files -----------------------------------------------------------------

def _kind_of(records, kind):
    if kind is None:
        if not records:
            raise ValueError("record kind required for an empty list")
        for name, cls in RECORD_TYPES.items():
            if isinstance(records[0], cls):
                return name
        raise TypeError(f"unsupported record type {type(records[0]).__name__}")
    if kind not in RECORD_TYPES:
        raise ValueError(f"unknown record kind {kind!r}")
    return kind


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_results(records, path, fmt: str = "csv", kind: str | None = None) -> None:
    """Write records as CSV (fixed column order) or a JSON list of objects."""
    kind = _kind_of(records, kind)
    cls = RECORD_TYPES[kind]
    names = [f.name for f in dataclasses.fields(cls)]
    try:
        with open(path, "w", newline="") as fh:
            if fmt == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(names)
                for r in records:
                    w.writerow([_fmt(getattr(r, n)) for n in names])
            elif fmt == "json":
                json.dump([dataclasses.asdict(r) for r in records], fh, indent=1)
                fh.write("\n")
            else:
                raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc


def read_results(path, fmt: str = "csv", kind: str = "ber") -> list:
    """Inverse of :func:`emit_results`."""
    cls = RECORD_TYPES[_kind_of([], kind)]
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    conv = {"int": int, "float": float, "str": str}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh)) if fmt == "csv" else json.load(fh)
    return [cls(**{k: conv[types[k]](v) for k, v in row.items()}) for row in rows]
