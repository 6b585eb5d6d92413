"""Command-line entry point: synth / separate / nmf / eval / sweep.

Configuration files use dotted key = value lines; command-line flags override
file values. Exit codes: 0 success, 2 configuration error, 3 runtime or
numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import bench
from .core_signal import MixingModel, MixtureProblem, Waveform, mix, read_wav, write_wav
from .errors import ConfigurationError, DomainError, ParseError, ShapeError
from .metrics import evaluate, identity_switch_rate
from .nmf import separate_nmf
from .pipeline import Mode, Selection, SeparationConfig, plan_segments, separate
from .posterior_sampler import Integrator
from .schedule import NoiseSchedule, make_grid
from .score_models import (
    default_kde_bandwidth,
    kde_prior_from_exemplars,
    load_exemplar_bank,
)
from .synth_bench import ScenarioKind, make_scenario, render_voice

__all__ = ["main", "load_config", "sweep", "plot_data"]

WORKERS_ENV = "DUETSEP_WORKERS"

KNOWN_CONFIG_KEYS = {
    "schedule.sigma_min",
    "schedule.sigma_max",
    "schedule.steps",
    "sampler.integrator",
    "sampler.steps",
    "sampler.seed",
    "sampler.best_of_k",
    "sweep.modes",
    "sweep.overlaps",
    "sweep.seeds",
    "sweep.scenario",
    "sweep.duration",
    "sweep.segment",
    "sweep.best_of_k",
    "sweep.steps",
    "sweep.out",
}


def load_config(path) -> Dict[str, str]:
    """Parse a dotted key = value config file; unknown keys are rejected."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_CONFIG_KEYS:
            raise ConfigurationError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


# ---------------------------------------------------------------- synth


def _cmd_synth(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = ScenarioKind(args.scenario)
    scenario = make_scenario(kind, args.duration, args.seed)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(101,)))
    voices = [
        render_voice(spec, contour, args.rate, args.duration, seed=int(rng.integers(2**31)))
        for spec, contour in zip(scenario.singers, scenario.contours)
    ]
    mixing = MixingModel(sources=2)
    mixture = mix(voices, mixing)
    for i, v in enumerate(voices, start=1):
        write_wav(out_dir / f"voice{i}.wav", v)
    write_wav(out_dir / "mixture.wav", mixture)
    with open(out_dir / "contours.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "f0_voice1_hz", "f0_voice2_hz"])
        t = np.linspace(0, args.duration, 200)
        for ti, fa, fb in zip(t, scenario.contours[0].at(t), scenario.contours[1].at(t)):
            writer.writerow([f"{ti:.4f}", f"{fa:.3f}", f"{fb:.3f}"])
    meta = {
        "kind": kind.value,
        "duration": args.duration,
        "seed": args.seed,
        "sample_rate": args.rate,
        "crossing_times": list(scenario.crossing_times),
        "singers": [
            {
                "partial_amplitudes": list(s.partial_amplitudes),
                "vibrato_rate": s.vibrato_rate,
                "vibrato_depth": s.vibrato_depth,
            }
            for s in scenario.singers
        ],
    }
    (out_dir / "scenario.json").write_text(json.dumps(meta, indent=2))
    print(f"wrote scenario to {out_dir}")
    return 0


# ---------------------------------------------------------------- separate


def _cmd_separate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mixture = read_wav(args.mixture)
    references = [read_wav(p) for p in args.refs] if args.refs else None
    n_sources = len(references) if references else args.sources
    exemplars = load_exemplar_bank(args.bank)
    bandwidth = args.bandwidth or default_kde_bandwidth(exemplars)
    mixing = MixingModel(sources=n_sources)
    problem = MixtureProblem(mixture, mixing)
    plan = plan_segments(len(mixture), args.segment, args.overlap)
    mode = Mode(args.mode)
    model_length = plan.hop if mode is Mode.SEGMENTED else args.segment
    if exemplars.shape[1] != model_length:
        raise ConfigurationError(
            f"bank exemplar length {exemplars.shape[1]} does not match the "
            f"model segment length {model_length}"
        )
    prior = kde_prior_from_exemplars(exemplars, bandwidth)
    models = [prior] * n_sources
    selection = (
        Selection.ORACLE_SI_SDR if references else Selection.MIXTURE_RESIDUAL
    )
    schedule = NoiseSchedule(sigma_min=args.sigma_min, sigma_max=args.sigma_max)
    config = SeparationConfig(
        mode=mode,
        plan=plan,
        grid=make_grid(schedule, args.steps),
        integrator=Integrator(args.integrator),
        seed=args.seed,
        best_of_k=args.best_of,
        selection=selection,
    )
    result = separate(problem, models, config, references=references)
    for i, src in enumerate(result.sources, start=1):
        write_wav(out_dir / f"source{i}.wav", src)
    diagnostics = result.to_dict()
    if references:
        diagnostics["evaluation"] = evaluate(
            result.sources, references, mixture
        ).to_dict()
    (out_dir / "diagnostics.json").write_text(json.dumps(diagnostics, indent=2))
    print(f"wrote {len(result.sources)} sources to {out_dir}")
    return 0


# ---------------------------------------------------------------- nmf


def _cmd_nmf(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mixture = read_wav(args.mixture)
    problem = MixtureProblem(mixture, MixingModel(sources=args.sources))
    sep = separate_nmf(
        problem,
        n_sources=args.sources,
        components_per_source=args.components,
        iterations=args.iters,
        seed=args.seed,
    )
    for i, src in enumerate(sep.sources, start=1):
        write_wav(out_dir / f"source{i}.wav", src)
    meta = {"used_random_init": sep.used_random_init, "seed": args.seed}
    (out_dir / "nmf.json").write_text(json.dumps(meta, indent=2))
    print(f"wrote {len(sep.sources)} sources to {out_dir}")
    return 0


# ---------------------------------------------------------------- eval


def _cmd_eval(args) -> int:
    est_paths = sorted(Path(args.est).glob("*.wav"))
    ref_paths = sorted(Path(args.refs).glob("*.wav"))
    if not est_paths or len(est_paths) != len(ref_paths):
        raise ConfigurationError(
            f"estimate/reference counts differ: {len(est_paths)} vs {len(ref_paths)}"
        )
    estimates = [read_wav(p) for p in est_paths]
    references = [read_wav(p) for p in ref_paths]
    mixture = read_wav(args.mixture)
    report = evaluate(estimates, references, mixture)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2))
    if args.csv:
        new = not Path(args.csv).exists()
        with open(args.csv, "a", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(["mixture", "mean_si_sdri", "mean_sdri", "permutation"])
            writer.writerow(
                [args.mixture, f"{report.mean_si_sdri:.4f}", f"{report.mean_sdri:.4f}",
                 " ".join(map(str, report.permutation))]
            )
    print(f"mean SI-SDRi {report.mean_si_sdri:.2f} dB, mean SDRi {report.mean_sdri:.2f} dB")
    return 0


# ---------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepSpec:
    modes: List[str]
    overlaps: List[float]
    seeds: List[int]
    scenario: str = "crossing"
    duration: float = 4.0
    segment: int = 8192
    steps: int = 100
    best_of_k: int = 3
    out: str = "sweep_out"


def _sweep_row(task) -> dict:
    spec_dict, mode_name, overlap, seed = task
    spec = SweepSpec(**spec_dict)
    try:
        case = bench.build_case(
            seed,
            kind=ScenarioKind(spec.scenario),
            duration=spec.duration,
            segment_length=spec.segment,
        )
        if mode_name == "nmf":
            row = bench.run_nmf_baseline(case, seed=seed)
        else:
            row = bench.run_mode(
                case,
                Mode(mode_name),
                overlap_ratio=overlap,
                steps=spec.steps,
                best_of_k=spec.best_of_k,
                seed=seed,
            )
        return {
            "mode": mode_name,
            "overlap": overlap,
            "seed": seed,
            "si_sdri": row.mean_si_sdri,
            "sdri": row.mean_sdri,
            "switch_rate": row.switch_rate,
            "error": "",
        }
    except Exception as exc:  # record the failure, keep sweeping
        return {
            "mode": mode_name,
            "overlap": overlap,
            "seed": seed,
            "si_sdri": float("nan"),
            "sdri": float("nan"),
            "switch_rate": float("nan"),
            "error": f"{type(exc).__name__}: {exc}",
        }


def sweep(spec: SweepSpec, workers: int = 1) -> dict:
    """Run the (mode x overlap x seed) grid and aggregate mean +/- std per cell."""
    if not spec.modes or not spec.overlaps or not spec.seeds:
        raise ConfigurationError("sweep grid must be nonempty")
    tasks = [
        (asdict(spec), mode, overlap, seed)
        for mode in spec.modes
        for overlap in spec.overlaps
        for seed in spec.seeds
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]
    cells = []
    for mode in spec.modes:
        for overlap in spec.overlaps:
            vals = [
                r
                for r in rows
                if r["mode"] == mode and r["overlap"] == overlap and not r["error"]
            ]
            si = [r["si_sdri"] for r in vals]
            sd = [r["sdri"] for r in vals]
            cells.append(
                {
                    "mode": mode,
                    "overlap": overlap,
                    "n": len(vals),
                    "si_sdri_mean": float(np.mean(si)) if si else None,
                    "si_sdri_std": float(np.std(si, ddof=1)) if len(si) > 1 else None,
                    "sdri_mean": float(np.mean(sd)) if sd else None,
                    "sdri_std": float(np.std(sd, ddof=1)) if len(sd) > 1 else None,
                }
            )
    return {"config": asdict(spec), "rows": rows, "cells": cells}


def plot_data(report: dict) -> str:
    """Columnar text for gnuplot: one block per (mode, overlap) cell."""
    cells = report.get("cells", [])
    if not cells:
        raise DomainError("empty report")
    lines = []
    for cell in sorted(cells, key=lambda c: (c["mode"], c["overlap"])):
        mean = cell["si_sdri_mean"]
        std = cell["si_sdri_std"]
        lines.append(f"# mode={cell['mode']} overlap={cell['overlap']}")
        lines.append(
            f"{'nan' if mean is None else f'{mean:.6f}'} "
            f"{'nan' if std is None else f'{std:.6f}'} {cell['n']}"
        )
        lines.append("")
    return "\n".join(lines)


def _parse_list(text: str, cast):
    return [cast(part) for part in text.replace(",", " ").split()]


def _cmd_sweep(args) -> int:
    file_cfg = load_config(args.config) if args.config else {}

    def pick(flag_value, key, cast, default):
        if flag_value is not None:
            return flag_value
        if key in file_cfg:
            return cast(file_cfg[key])
        return default

    spec = SweepSpec(
        modes=pick(args.modes and _parse_list(args.modes, str), "sweep.modes",
                   lambda v: _parse_list(v, str), ["naive", "segmented", "ar", "ar-tf", "nmf"]),
        overlaps=pick(args.overlaps and _parse_list(args.overlaps, float), "sweep.overlaps",
                      lambda v: _parse_list(v, float), [0.75]),
        seeds=pick(args.seeds and _parse_list(args.seeds, int), "sweep.seeds",
                   lambda v: _parse_list(v, int), [0, 1, 2]),
        scenario=pick(args.scenario, "sweep.scenario", str, "crossing"),
        duration=pick(args.duration, "sweep.duration", float, 4.0),
        segment=pick(args.segment, "sweep.segment", int, 8192),
        steps=pick(args.steps, "sweep.steps", int, 100),
        best_of_k=pick(args.best_of, "sweep.best_of_k", int, 3),
        out=pick(args.out, "sweep.out", str, "sweep_out"),
    )
    workers = args.workers or int(os.environ.get(WORKERS_ENV, "1"))
    report = sweep(spec, workers=workers)
    out_dir = Path(spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep.json").write_text(json.dumps(report, indent=2))
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["mode", "overlap", "seed", "si_sdri", "sdri", "switch_rate", "error"],
        )
        writer.writeheader()
        writer.writerows(report["rows"])
    (out_dir / "sweep_plot.dat").write_text(plot_data(report))
    for cell in report["cells"]:
        mean = cell["si_sdri_mean"]
        std = cell["si_sdri_std"]
        print(
            f"{cell['mode']:>10} overlap={cell['overlap']:<5} "
            f"SI-SDRi {mean if mean is None else f'{mean:6.2f}'} "
            f"+/- {std if std is None else f'{std:.2f}'} (n={cell['n']})"
        )
    print(f"wrote sweep results to {out_dir}")
    return 0


# ---------------------------------------------------------------- driver


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="duetsep")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic duet scenario")
    p.add_argument("--scenario", default="crossing",
                   choices=[k.value for k in ScenarioKind])
    p.add_argument("--duration", type=float, default=8.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=int, default=8000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("separate", help="diffusion posterior separation")
    p.add_argument("--mode", default="ar", choices=[m.value for m in Mode])
    p.add_argument("--mixture", required=True)
    p.add_argument("--refs", nargs="*", default=None)
    p.add_argument("--bank", required=True,
                   help="exemplar bank file or directory of WAV segments")
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--overlap", type=float, default=0.75)
    p.add_argument("--segment", type=int, default=131072)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--best-of", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sources", type=int, default=2)
    p.add_argument("--integrator", default="heun", choices=[i.value for i in Integrator])
    p.add_argument("--sigma-min", type=float, default=0.01)
    p.add_argument("--sigma-max", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_separate)

    p = sub.add_parser("nmf", help="NMF separation baseline")
    p.add_argument("--mixture", required=True)
    p.add_argument("--sources", type=int, default=2)
    p.add_argument("--components", type=int, default=8)
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_nmf)

    p = sub.add_parser("eval", help="score estimates against references")
    p.add_argument("--est", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--mixture", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="overlap-ratio / mode experiment grid")
    p.add_argument("--config", default=None)
    p.add_argument("--modes", default=None)
    p.add_argument("--overlaps", default=None)
    p.add_argument("--seeds", default=None)
    p.add_argument("--scenario", default=None)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--segment", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--best-of", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ParseError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ShapeError, DomainError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
