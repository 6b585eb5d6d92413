#!/usr/bin/env python3
"""Sweep the overlap ratio for auto-regressive separation and report how
SI-SDRi and the identity-switch rate respond. Thin wrapper over the library
sweep harness; equivalent to `duetsep sweep` with an overlap grid.

Example:
    python3 scripts/run_overlap_sweep.py --overlaps 0 0.25 0.5 0.75 \
        --seeds 0 1 2 --workers 4 --out sweep_out
"""

import argparse

from duetsep.cli import SweepSpec, main as cli_main


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--modes", nargs="+", default=["ar"])
    ap.add_argument("--overlaps", nargs="+", type=float,
                    default=[0.0, 0.25, 0.5, 0.75])
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    ap.add_argument("--scenario", default="crossing")
    ap.add_argument("--duration", type=float, default=4.0)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--best-of", type=int, default=3)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="sweep_out")
    args = ap.parse_args()

    argv = [
        "sweep",
        "--modes", " ".join(args.modes),
        "--overlaps", " ".join(str(o) for o in args.overlaps),
        "--seeds", " ".join(str(s) for s in args.seeds),
        "--scenario", args.scenario,
        "--duration", str(args.duration),
        "--steps", str(args.steps),
        "--best-of", str(args.best_of),
        "--workers", str(args.workers),
        "--out", args.out,
    ]
    raise SystemExit(cli_main(argv))


if __name__ == "__main__":
    main()
