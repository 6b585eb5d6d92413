"""Segmentation, the four separation strategies, best-of-k selection, and
stitching of segment outputs into full-length sources.

Modes:
  naive     one posterior run over the whole (padded) mixture per candidate
  segmented independent runs on disjoint segments of length L*(1-r)
  ar        overlapped segments left to right, each conditioned on the
            previous segment's chosen output over the overlap
  ar-tf     same, but the condition values come from ground-truth references
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import permutations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core_signal import MixingModel, MixtureProblem, Waveform
from .errors import ConfigurationError, ShapeError
from .metrics import si_sdr
from .posterior_sampler import (
    InpaintCondition,
    InpaintMode,
    Integrator,
    SamplerConfig,
    sample_posterior,
)
from .schedule import TimeGrid
from .score_models import ScoreModel, TiledScoreModel

__all__ = [
    "Mode",
    "Selection",
    "SegmentPlan",
    "SeparationConfig",
    "SegmentRecord",
    "SeparationResult",
    "plan_segments",
    "select_best_of_k",
    "stitch",
    "separate",
]

CROSSFADE_MAX = 256


class Mode(Enum):
    NAIVE = "naive"
    SEGMENTED = "segmented"
    AR = "ar"
    AR_TF = "ar-tf"


class Selection(Enum):
    ORACLE_SI_SDR = "oracle_si_sdr"
    MIXTURE_RESIDUAL = "mixture_residual"


@dataclass(frozen=True)
class SegmentPlan:
    segment_length: int
    overlap_ratio: float
    hop: int
    offsets: Tuple[int, ...]
    padded_length: int

    @property
    def overlap(self) -> int:
        return self.segment_length - self.hop


def plan_segments(signal_length: int, segment_length: int, overlap_ratio: float) -> SegmentPlan:
    """Cover [0, signal_length) with segments of the given length and overlap.

    hop = round(L * (1 - r)); the input is zero-padded so the last segment
    lines up with the hop grid.
    """
    if segment_length < 1:
        raise ConfigurationError("segment_length must be >= 1")
    if not (0.0 <= overlap_ratio < 1.0):
        raise ConfigurationError(f"overlap_ratio must lie in [0, 1), got {overlap_ratio}")
    if signal_length < 1:
        raise ConfigurationError("signal_length must be >= 1")
    hop = max(1, round(segment_length * (1.0 - overlap_ratio)))
    offsets = [0]
    while offsets[-1] + segment_length < signal_length:
        offsets.append(offsets[-1] + hop)
    return SegmentPlan(
        segment_length=segment_length,
        overlap_ratio=overlap_ratio,
        hop=hop,
        offsets=tuple(offsets),
        padded_length=offsets[-1] + segment_length,
    )


@dataclass(frozen=True)
class SeparationConfig:
    mode: Mode
    plan: SegmentPlan
    grid: TimeGrid
    integrator: Integrator = Integrator.HEUN
    seed: int = 0
    best_of_k: int = 1
    selection: Selection = Selection.ORACLE_SI_SDR

    def __post_init__(self):
        if self.best_of_k < 1:
            raise ConfigurationError("best_of_k must be >= 1")


@dataclass(frozen=True)
class SegmentRecord:
    segment_index: int
    candidate_index: int
    selection_score: float
    permutation: Tuple[int, ...]
    seed: int


@dataclass(frozen=True)
class SeparationResult:
    sources: List[Waveform]
    per_segment: List[SegmentRecord]
    config: SeparationConfig

    def to_dict(self) -> dict:
        return {
            "mode": self.config.mode.value,
            "segment_length": self.config.plan.segment_length,
            "overlap_ratio": self.config.plan.overlap_ratio,
            "steps": self.config.grid.steps,
            "integrator": self.config.integrator.value,
            "seed": self.config.seed,
            "best_of_k": self.config.best_of_k,
            "selection": self.config.selection.value,
            "per_segment": [
                {
                    "segment": r.segment_index,
                    "candidate": r.candidate_index,
                    "score": r.selection_score,
                    "permutation": list(r.permutation),
                    "seed": r.seed,
                }
                for r in self.per_segment
            ],
        }


def _candidate_seed(base_seed: int, segment: int, candidate: int) -> int:
    seq = np.random.SeedSequence(base_seed, spawn_key=(segment, candidate))
    return int(seq.generate_state(1)[0])


def select_best_of_k(
    candidates: Sequence[Sequence[np.ndarray]],
    selection: Selection,
    references: Optional[Sequence[np.ndarray]],
    mixture: np.ndarray,
) -> Tuple[int, Tuple[int, ...]]:
    """Pick the best candidate; oracle selection also searches source permutations.

    Returns (candidate index, permutation) where permutation[i] is the source
    of the chosen candidate that plays the role of output source i.
    """
    if len(candidates) < 1:
        raise ConfigurationError("need at least one candidate")
    n = len(candidates[0])
    identity = tuple(range(n))
    if selection is Selection.MIXTURE_RESIDUAL:
        best, best_idx = np.inf, 0
        for idx, cand in enumerate(candidates):
            resid = float(np.linalg.norm(mixture - np.sum(cand, axis=0)))
            if resid < best:
                best, best_idx = resid, idx
        return best_idx, identity
    if references is None:
        raise ConfigurationError("oracle selection requires references")
    best_score = -np.inf
    best_idx, best_perm = 0, identity
    for idx, cand in enumerate(candidates):
        for perm in permutations(range(n)):
            score = np.mean(
                [_safe_si_sdr(cand[p], references[i]) for i, p in enumerate(perm)]
            )
            if score > best_score:
                best_score, best_idx, best_perm = score, idx, perm
    return best_idx, best_perm


def _selection_score(
    cand: Sequence[np.ndarray],
    perm: Tuple[int, ...],
    selection: Selection,
    references: Optional[Sequence[np.ndarray]],
    mixture: np.ndarray,
) -> float:
    if selection is Selection.MIXTURE_RESIDUAL:
        return float(np.linalg.norm(mixture - np.sum(cand, axis=0)))
    return float(
        np.mean([_safe_si_sdr(cand[p], references[i]) for i, p in enumerate(perm)])
    )


def _safe_si_sdr(estimate: np.ndarray, reference: np.ndarray) -> float:
    # zero-padded reference tails are legal inside segments
    if not np.any(reference != 0):
        return 0.0
    return si_sdr(estimate, reference)


def stitch(segments: Sequence[Sequence[np.ndarray]], plan: SegmentPlan) -> List[np.ndarray]:
    """Merge per-segment sources into full-length arrays.

    The earlier segment owns each overlap, with a linear crossfade of width
    min(256, overlap//4) ending at the overlap boundary, after which the later
    segment takes over. overlap 0 reduces to concatenation.
    """
    if len(segments) != len(plan.offsets):
        raise ShapeError("segment count does not match the plan")
    n_sources = len(segments[0])
    out = [np.zeros(plan.padded_length) for _ in range(n_sources)]
    for src in range(n_sources):
        prev_end = 0
        for j, off in enumerate(plan.offsets):
            seg = np.asarray(segments[j][src], dtype=np.float64)
            if seg.shape[0] != plan.segment_length:
                raise ShapeError("segment output length does not match the plan")
            if j == 0:
                out[src][off : off + plan.segment_length] = seg
            else:
                overlap = prev_end - off
                junction = prev_end
                width = min(CROSSFADE_MAX, max(overlap // 4, 0))
                lo = max(junction - width, off)
                hi = junction
                if hi > lo:
                    ramp = np.linspace(0.0, 1.0, hi - lo)
                    out[src][lo:hi] = (1 - ramp) * out[src][lo:hi] + ramp * seg[lo - off : hi - off]
                out[src][hi : off + plan.segment_length] = seg[hi - off :]
            prev_end = off + plan.segment_length
    return out


def _segment_slice(x: np.ndarray, offset: int, length: int) -> np.ndarray:
    """Slice with implicit zero padding past the end."""
    out = np.zeros(length)
    avail = min(length, x.shape[0] - offset)
    if avail > 0:
        out[:avail] = x[offset : offset + avail]
    return out


def _run_candidates(
    seg_mixture: np.ndarray,
    models: Sequence[ScoreModel],
    mixing: MixingModel,
    grid: TimeGrid,
    integrator: Integrator,
    base_seed: int,
    segment_index: int,
    best_of_k: int,
    selection: Selection,
    seg_refs: Optional[Sequence[np.ndarray]],
    conditions: Optional[Sequence[Optional[InpaintCondition]]],
    rate: int,
) -> Tuple[List[np.ndarray], SegmentRecord]:
    problem = MixtureProblem(Waveform(seg_mixture, rate), mixing)
    candidates = []
    seeds = []
    for cand in range(best_of_k):
        seed = _candidate_seed(base_seed, segment_index, cand)
        seeds.append(seed)
        cfg = SamplerConfig(grid=grid, integrator=integrator, seed=seed)
        candidates.append(sample_posterior(problem, models, cfg, conditions))
    idx, perm = select_best_of_k(candidates, selection, seg_refs, seg_mixture)
    chosen = [candidates[idx][p] for p in perm]
    score = _selection_score(candidates[idx], perm, selection, seg_refs, seg_mixture)
    record = SegmentRecord(segment_index, idx, score, perm, seeds[idx])
    return chosen, record


def separate(
    problem: MixtureProblem,
    models: Sequence[ScoreModel],
    config: SeparationConfig,
    references: Optional[Sequence[Waveform]] = None,
) -> SeparationResult:
    """Run the configured separation strategy end to end."""
    mode = config.mode
    needs_refs = (
        config.selection is Selection.ORACLE_SI_SDR or mode is Mode.AR_TF
    )
    if needs_refs and references is None:
        raise ConfigurationError(f"mode {mode.value} / oracle selection requires references")
    mixture = problem.mixture.samples
    rate = problem.mixture.sample_rate
    n_sources = problem.mixing.sources
    ref_arrays = None
    if references is not None:
        ref_arrays = [r.samples for r in references]
        for r in ref_arrays:
            if r.shape != mixture.shape:
                raise ShapeError("references must match the mixture length")

    plan = config.plan
    if mode is Mode.SEGMENTED:
        # disjoint segments of length L*(1-r), no conditioning
        plan = plan_segments(len(mixture), plan.hop, 0.0)
    elif mode is Mode.NAIVE:
        base = plan_segments(len(mixture), config.plan.segment_length, 0.0)
        plan = plan_segments(base.padded_length, base.padded_length, 0.0)

    seg_models = list(models)
    native = next((m.native_length for m in seg_models if m.native_length is not None), None)
    if native is not None and native != plan.segment_length:
        if plan.segment_length % native == 0:
            seg_models = [
                TiledScoreModel(m) if m.native_length is not None else m
                for m in seg_models
            ]
        else:
            raise ShapeError(
                f"model native_length {native} incompatible with segment length "
                f"{plan.segment_length}"
            )

    overlap = plan.overlap if mode in (Mode.AR, Mode.AR_TF) else 0
    records: List[SegmentRecord] = []
    seg_outputs: List[List[np.ndarray]] = []
    prev_chosen: Optional[List[np.ndarray]] = None
    prev_offset = 0
    for j, off in enumerate(plan.offsets):
        seg_mix = _segment_slice(mixture, off, plan.segment_length)
        seg_refs = (
            [_segment_slice(r, off, plan.segment_length) for r in ref_arrays]
            if ref_arrays is not None
            else None
        )
        conditions = None
        if overlap > 0 and j > 0:
            mask = np.zeros(plan.segment_length, dtype=bool)
            mask[:overlap] = True
            conditions = []
            for src in range(1, n_sources):
                if mode is Mode.AR_TF:
                    values = seg_refs[src].copy()
                    cmode = InpaintMode.TEACHER_FORCING
                else:
                    values = np.zeros(plan.segment_length)
                    values[:overlap] = prev_chosen[src][off - prev_offset : off - prev_offset + overlap]
                    cmode = InpaintMode.PREVIOUS_ESTIMATE
                conditions.append(InpaintCondition(mask=mask, values=values, mode=cmode))
        chosen, record = _run_candidates(
            seg_mix,
            seg_models,
            problem.mixing,
            config.grid,
            config.integrator,
            config.seed,
            j,
            config.best_of_k,
            config.selection,
            seg_refs,
            conditions,
            rate,
        )
        records.append(record)
        seg_outputs.append(chosen)
        prev_chosen = chosen
        prev_offset = off

    stitched = stitch(seg_outputs, plan)
    sources = [Waveform(s[: len(mixture)], rate) for s in stitched]
    return SeparationResult(sources=sources, per_segment=records, config=config)
