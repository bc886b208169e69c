"""Command-line entry point: ``otfs-sim --scheme otfs-ideal --snr 10 14 18 ...``"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .frame import ParameterError
from .harness import SCHEMES, CampaignConfig, load_config, run_campaign

log = logging.getLogger("otfs")

# large-scale preset, enabled with --full-scale
FULL_SCALE = {"n": 128, "m": 512, "frames": 30000}


def _ni(value: str):
    return None if value.lower() in ("full", "none") else int(value)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otfs-sim", description=__doc__)
    p.add_argument("--config", help="YAML file mirroring the campaign fields; flags override it")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--n", type=int, help="Doppler bins / time slots per frame")
    p.add_argument("--m", type=int, help="delay bins / subcarriers")
    p.add_argument("--qam", type=int, choices=(4, 16, 64))
    p.add_argument("--snr", type=float, nargs="+", help="SNR points in dB")
    p.add_argument("--speed", type=float, nargs="+", help="UE speeds in km/h")
    p.add_argument("--frames", type=int, help="frames per grid point")
    p.add_argument("--ni", type=_ni, default=argparse.SUPPRESS,
                   help="IDI window half-width, or 'full'")
    p.add_argument("--damping", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--profile", help="channel profile name (EPA, EVA, ETU or one from --config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--noiseless", action="store_true", default=None)
    p.add_argument("--threads", type=int, help="worker threads per grid point")
    p.add_argument("--b-off", type=int, dest="b_off", help="OFDM off-diagonals kept per side")
    p.add_argument("--full-scale", action="store_true",
                   help="N=128, M=512, 30000 frames unless given explicitly")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> CampaignConfig:
    cfg = load_config(args.config) if args.config else CampaignConfig()
    if args.full_scale:
        cfg = replace(cfg, **FULL_SCALE)
    det = {k: getattr(args, k) for k in ("damping", "gamma", "epsilon", "max_iters")
           if getattr(args, k) is not None}
    if det:
        cfg = replace(cfg, detector=replace(cfg.detector, **det))
    fields = {"scheme": args.scheme, "n": args.n, "m": args.m, "qam": args.qam,
              "snr_db": args.snr, "speed_kmph": args.speed, "frames": args.frames,
              "profile": args.profile, "seed": args.seed, "out": args.out,
              "noiseless": args.noiseless, "threads": args.threads, "b_off": args.b_off}
    over = {k: v for k, v in fields.items() if v is not None}
    if hasattr(args, "ni"):
        over["ni"] = args.ni
    return replace(cfg, **over)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        cfg = config_from_args(args)
        log.info("%s", cfg)
        records = run_campaign(cfg)
    except ParameterError as exc:
        parser.error(str(exc))
    for r in records:
        print(f"{r.scheme} snr={r.snr_db:g} dB speed={r.speed_kmph:g} km/h ni={r.ni} "
              f"ber={r.ber:.3e} ({r.bit_errors}/{r.total_bits}) iters={r.mean_iterations:.2f} "
              f"{r.wall_time_s:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
