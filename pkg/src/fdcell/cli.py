"""Command-line entry point: ``fdcell <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time

import numpy as np

from .config import ConfigError, ScenarioConfig, load_config
from .harness import emit_results, run_ber, run_doa_experiment, run_spectral_efficiency
from .impairments import SicMode

log = logging.getLogger("fdcell")


def _snr_range(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return start, stop, step


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value scenario file")
    common.add_argument("--snr", type=_snr_range, metavar="START:STOP:STEP", help="SNR grid in dB")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    common.add_argument("--seed", type=_u64, help="master seed")
    common.add_argument("--sic-mode", choices=[m.value for m in SicMode])
    common.add_argument("--doa-mode", choices=["oracle", "estimated"])
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--dump-channels", nargs="?", const="channels.csv", default=None,
                        metavar="PATH", help="write channel taps of the first SNR point")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fdcell",
                                description="Full-duplex SC-FDMA cell link-level simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ber-downlink", parents=[common], help="BER at the UEs")
    sub.add_parser("ber-uplink", parents=[common], help="BER at the eNB")
    sub.add_parser("spectral-efficiency", parents=[common], help="downlink SE per scheme")
    doa = sub.add_parser("doa", parents=[common], help="Root-MUSIC accuracy and null depth")
    doa.add_argument("--snapshot-snr", type=float, help="snapshot SNR in dB (inf = noiseless)")
    bp = sub.add_parser("beampattern", parents=[common], help="trained UE beam pattern")
    bp.add_argument("--ue", type=int, default=0)
    bp.add_argument("--step", type=float, default=0.5, help="angle step in degrees")
    sub.add_parser("selftest", parents=[common], help="quick end-to-end sanity checks")
    return p


def scenario_from_args(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.snr:
        changes.update(snr_start_db=args.snr[0], snr_stop_db=args.snr[1], snr_step_db=args.snr[2])
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.sic_mode:
        changes["sic_mode"] = SicMode(args.sic_mode)
    if args.doa_mode:
        changes["doa_mode"] = args.doa_mode
    return cfg.replace(**changes).check()


def _beampattern(cfg: ScenarioConfig, ue: int, step: float, out) -> None:
    from .slot import trial_stream, ue_beams
    from .smart_antenna import beam_pattern

    if not 0 <= ue < cfg.n_ues:
        raise ConfigError([f"--ue must lie in [0, {cfg.n_ues})"])
    beams, _ = ue_beams(cfg, trial_stream(cfg, 0))
    grid = np.arange(-90.0, 90.0 + step / 2, step)
    pat = beam_pattern(beams[ue].weights, cfg.spacing_wl, np.deg2rad(grid))
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["angle_deg", "gain_db"])
    for a, g in zip(grid, pat):
        w.writerow([repr(float(a)), repr(float(10 * np.log10(max(g, 1e-300))))])


def _selftest(cfg: ScenarioConfig) -> bool:
    from .slot import run_slot, trial_stream

    quiet = cfg.replace(pa_enabled=False, tx_noise_enabled=False)
    ok = True
    for t in range(3):
        r = run_slot(quiet, trial_stream(quiet, t), 0.0)
        errs = sum(v.errors for v in r.downlink.values()) + sum(v.errors for v in r.uplink.values())
        leak = max(v.interference_ratio for v in r.downlink.values())
        good = errs == 0 and leak < 1e-3
        ok &= good
        print(f"trial {t}: noiseless errors={errs} cross-UE leakage={leak:.2e} "
              f"{'ok' if good else 'FAIL'}")
    r = run_slot(cfg, trial_stream(cfg, 0), 0.0, sic_mode=SicMode.NONE)
    ber = r.downlink[cfg.ref_ue].errors / r.downlink[cfg.ref_ue].bits
    good = ber > 0.3
    ok &= good
    print(f"no cancellation: downlink BER={ber:.3f} {'ok' if good else 'FAIL'}")
    return ok


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2


def _run(args) -> int:
    cfg = scenario_from_args(args)
    t0 = time.perf_counter()
    cmd = args.command
    if cmd == "selftest":
        return 0 if _selftest(cfg) else 1
    if cmd == "beampattern":
        if args.out:
            with open(args.out, "w", newline="") as fh:
                _beampattern(cfg, args.ue, args.step, fh)
        else:
            _beampattern(cfg, args.ue, args.step, sys.stdout)
        return 0
    if cmd in ("ber-downlink", "ber-uplink"):
        records = run_ber(cfg, cmd.split("-")[1], workers=args.workers,
                          dump_channels=args.dump_channels)
        kind = "ber"
    elif cmd == "spectral-efficiency":
        records = run_spectral_efficiency(cfg, workers=args.workers)
        kind = "se"
    else:
        records = run_doa_experiment(cfg, snapshot_snr_db=args.snapshot_snr)
        kind = "doa"
    log.info("%s finished in %.1f s", cmd, time.perf_counter() - t0)
    emit_results(records, args.out or "/dev/stdout", args.format, kind)
    return 0


if __name__ == "__main__":
    sys.exit(main())
