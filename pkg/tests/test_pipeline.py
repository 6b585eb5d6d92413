import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duetsep import (
    GaussianPrior,
    Integrator,
    MixingModel,
    MixtureProblem,
    Mode,
    NoiseSchedule,
    SamplerConfig,
    Selection,
    SeparationConfig,
    Waveform,
    kde_prior_from_exemplars,
    make_grid,
    plan_segments,
    sample_posterior,
    select_best_of_k,
    separate,
    si_sdr,
    stitch,
)
from duetsep.errors import ConfigurationError, ShapeError
from duetsep.pipeline import _safe_si_sdr


class TestPlanSegments:
    def test_disjoint_tiling(self):
        plan = plan_segments(2 * 64, 64, 0.0)
        assert plan.offsets == (0, 64)
        assert plan.hop == 64
        assert plan.overlap == 0
        assert plan.padded_length == 128

    def test_quarter_hop(self):
        plan = plan_segments(10 * 131072, 131072, 0.75)
        assert plan.hop == 32768
        assert plan.overlap == 131072 - 32768

    def test_short_signal_single_segment(self):
        plan = plan_segments(40, 64, 0.5)
        assert plan.offsets == (0,)
        assert plan.padded_length == 64

    def test_coverage(self):
        plan = plan_segments(1000, 128, 0.75)
        last = plan.offsets[-1]
        assert last + plan.segment_length >= 1000
        assert plan.padded_length == last + 128
        np.testing.assert_array_equal(np.diff(plan.offsets), plan.hop)

    def test_invalid_ratio(self):
        with pytest.raises(ConfigurationError):
            plan_segments(100, 32, 1.0)
        with pytest.raises(ConfigurationError):
            plan_segments(100, 32, -0.1)

    def test_invalid_lengths(self):
        with pytest.raises(ConfigurationError):
            plan_segments(100, 0, 0.0)
        with pytest.raises(ConfigurationError):
            plan_segments(0, 32, 0.0)

    @given(
        n=st.integers(1, 4000),
        seg=st.integers(1, 256),
        r=st.floats(0, 0.9),
    )
    @settings(max_examples=60, deadline=None)
    def test_properties(self, n, seg, r):
        plan = plan_segments(n, seg, r)
        assert plan.hop >= 1
        assert plan.offsets[0] == 0
        assert plan.offsets[-1] + seg >= n
        if len(plan.offsets) > 1:
            assert plan.offsets[-2] + seg < n


class TestSelectBestOfK:
    def test_single_candidate_identity(self):
        refs = [np.ones(8), np.arange(8.0)]
        idx, perm = select_best_of_k([refs], Selection.ORACLE_SI_SDR, refs, np.zeros(8))
        assert idx == 0 and perm == (0, 1)

    def test_matches_brute_force(self):
        from itertools import permutations

        rng = np.random.default_rng(0)
        refs = [rng.normal(size=32), rng.normal(size=32)]
        cands = [
            [refs[0] + rng.normal(size=32) * s, refs[1] + rng.normal(size=32) * s]
            for s in (1.0, 0.2, 0.6)
        ]
        rng2 = np.random.default_rng(1)
        cands[1] = cands[1][::-1]  # permuted candidate must still win
        idx, perm = select_best_of_k(cands, Selection.ORACLE_SI_SDR, refs, np.zeros(32))
        best = max(
            ((i, p) for i in range(3) for p in permutations(range(2))),
            key=lambda ip: np.mean(
                [_safe_si_sdr(cands[ip[0]][ip[1][j]], refs[j]) for j in range(2)]
            ),
        )
        assert (idx, perm) == best
        assert idx == 1 and perm == (1, 0)

    def test_mixture_residual_fallback(self):
        mixture = np.ones(16)
        good = [0.5 * mixture, 0.5 * mixture]
        bad = [mixture, mixture]
        idx, perm = select_best_of_k([bad, good], Selection.MIXTURE_RESIDUAL, None, mixture)
        assert idx == 1 and perm == (0, 1)

    def test_oracle_requires_references(self):
        with pytest.raises(ConfigurationError):
            select_best_of_k([[np.ones(4)]], Selection.ORACLE_SI_SDR, None, np.ones(4))

    def test_zero_reference_scores_zero(self):
        assert _safe_si_sdr(np.ones(4), np.zeros(4)) == 0.0


class TestStitch:
    def test_disjoint_concatenation(self):
        plan = plan_segments(8, 4, 0.0)
        segs = [[np.arange(4.0)], [np.arange(4.0, 8.0)]]
        out = stitch(segs, plan)
        np.testing.assert_array_equal(out[0], np.arange(8.0))

    def test_agreeing_overlap_is_seamless(self):
        full = np.sin(np.linspace(0, 6, 96))
        plan = plan_segments(96, 64, 0.5)
        segs = [[full[off : off + 64].copy()] for off in plan.offsets]
        out = stitch(segs, plan)
        np.testing.assert_allclose(out[0][:96], full, atol=1e-12)

    def test_crossfade_bounded_slope(self):
        """A unit jump between disagreeing segments must be spread over the
        crossfade: no adjacent-sample difference may exceed 1/(width-1) plus
        rounding."""
        plan = plan_segments(96, 64, 0.5)
        segs = [[np.zeros(64)], [np.ones(64)]]
        out = stitch(segs, plan)
        width = min(256, plan.overlap // 4)
        assert np.max(np.abs(np.diff(out[0]))) <= 1.0 / (width - 1) + 1e-12

    def test_earlier_segment_owns_overlap(self):
        plan = plan_segments(96, 64, 0.5)
        segs = [[np.zeros(64)], [np.ones(64)]]
        out = stitch(segs, plan)
        junction = plan.offsets[1] + plan.overlap
        width = min(256, plan.overlap // 4)
        assert np.all(out[0][: junction - width] == 0.0)
        assert np.all(out[0][junction:] == 1.0)

    def test_count_mismatch(self):
        plan = plan_segments(8, 4, 0.0)
        with pytest.raises(ShapeError):
            stitch([[np.zeros(4)]], plan)

    def test_length_mismatch(self):
        plan = plan_segments(8, 4, 0.0)
        with pytest.raises(ShapeError):
            stitch([[np.zeros(4)], [np.zeros(5)]], plan)


def toy_problem(n=64, seed=0):
    rng = np.random.default_rng(seed)
    s1 = rng.normal(size=n) * 0.5
    s2 = rng.normal(size=n) * 0.5
    mixture = s1 + s2
    problem = MixtureProblem(Waveform(mixture, 8000), MixingModel(sources=2))
    refs = [Waveform(s1, 8000), Waveform(s2, 8000)]
    return problem, refs


def toy_models(refs, length):
    ex = np.stack([r.samples[:length] for r in refs])
    prior = kde_prior_from_exemplars(ex, bandwidth=0.1)
    return [prior, prior]


def make_config(mode, n, seg, r, steps=30, seed=0, k=1):
    return SeparationConfig(
        mode=mode,
        plan=plan_segments(n, seg, r),
        grid=make_grid(NoiseSchedule(0.01, 2.0), steps),
        integrator=Integrator.HEUN,
        seed=seed,
        best_of_k=k,
        selection=Selection.ORACLE_SI_SDR,
    )


class TestSeparate:
    def test_outputs_match_input_length(self):
        problem, refs = toy_problem(100)
        models = toy_models(refs, 32)
        cfg = make_config(Mode.AR, 100, 32, 0.5, steps=15)
        result = separate(problem, models, cfg, references=refs)
        assert all(len(s) == 100 for s in result.sources)
        assert len(result.per_segment) == len(cfg.plan.offsets)

    def test_ar_zero_overlap_equals_segmented(self):
        problem, refs = toy_problem(128, seed=3)
        models = toy_models(refs, 32)
        ar = separate(
            problem, models, make_config(Mode.AR, 128, 32, 0.0, steps=20, k=2),
            references=refs,
        )
        seg = separate(
            problem, models, make_config(Mode.SEGMENTED, 128, 32, 0.0, steps=20, k=2),
            references=refs,
        )
        for a, b in zip(ar.sources, seg.sources):
            np.testing.assert_array_equal(a.samples, b.samples)

    def test_segmented_ignores_overlap_ratio(self):
        """Segmented runs on disjoint hop-length pieces regardless of r."""
        problem, refs = toy_problem(128, seed=4)
        models = toy_models(refs, 32)
        a = separate(
            problem, models, make_config(Mode.SEGMENTED, 128, 64, 0.5, steps=20),
            references=refs,
        )
        b = separate(
            problem, models, make_config(Mode.SEGMENTED, 128, 32, 0.0, steps=20),
            references=refs,
        )
        for x, y in zip(a.sources, b.sources):
            np.testing.assert_array_equal(x.samples, y.samples)

    def test_naive_reduces_to_single_posterior_run(self):
        problem, refs = toy_problem(64, seed=5)
        models = toy_models(refs, 64)
        cfg = make_config(Mode.NAIVE, 64, 64, 0.0, steps=20)
        result = separate(problem, models, cfg, references=refs)
        assert len(result.per_segment) == 1
        rec = result.per_segment[0]
        direct = sample_posterior(
            problem, models,
            SamplerConfig(grid=cfg.grid, integrator=cfg.integrator, seed=rec.seed),
        )
        chosen = [direct[p] for p in rec.permutation]
        for got, want in zip(result.sources, chosen):
            np.testing.assert_array_equal(got.samples, want)

    def test_sources_sum_to_mixture_without_overlap(self):
        problem, refs = toy_problem(96, seed=6)
        models = toy_models(refs, 32)
        cfg = make_config(Mode.SEGMENTED, 96, 32, 0.0, steps=15)
        result = separate(problem, models, cfg, references=refs)
        total = np.sum([s.samples for s in result.sources], axis=0)
        np.testing.assert_allclose(total, problem.mixture.samples, atol=1e-10)

    def test_deterministic(self):
        problem, refs = toy_problem(96, seed=7)
        models = toy_models(refs, 32)
        cfg = make_config(Mode.AR, 96, 32, 0.5, steps=15, k=2)
        a = separate(problem, models, cfg, references=refs)
        b = separate(problem, models, cfg, references=refs)
        for x, y in zip(a.sources, b.sources):
            np.testing.assert_array_equal(x.samples, y.samples)

    def test_best_of_k_never_decreases_score(self):
        problem, refs = toy_problem(64, seed=8)
        models = toy_models(refs, 64)
        r1 = separate(
            problem, models, make_config(Mode.NAIVE, 64, 64, 0.0, steps=20, k=1),
            references=refs,
        )
        r3 = separate(
            problem, models, make_config(Mode.NAIVE, 64, 64, 0.0, steps=20, k=3),
            references=refs,
        )
        assert r3.per_segment[0].selection_score >= r1.per_segment[0].selection_score

    def test_oracle_requires_references(self):
        problem, refs = toy_problem(64)
        models = toy_models(refs, 32)
        cfg = make_config(Mode.SEGMENTED, 64, 32, 0.0, steps=5)
        with pytest.raises(ConfigurationError):
            separate(problem, models, cfg)

    def test_ar_tf_requires_references(self):
        problem, refs = toy_problem(64)
        models = toy_models(refs, 32)
        cfg = SeparationConfig(
            mode=Mode.AR_TF,
            plan=plan_segments(64, 32, 0.5),
            grid=make_grid(NoiseSchedule(0.01, 2.0), 5),
            selection=Selection.MIXTURE_RESIDUAL,
        )
        with pytest.raises(ConfigurationError):
            separate(problem, models, cfg)

    def test_incompatible_native_length(self):
        problem, refs = toy_problem(64)
        models = [GaussianPrior(mean=np.zeros(24), variance=1.0)] * 2
        cfg = make_config(Mode.SEGMENTED, 64, 32, 0.0, steps=5)
        with pytest.raises(ShapeError):
            separate(problem, models, cfg, references=refs)

    def test_tiled_model_used_for_multiples(self):
        problem, refs = toy_problem(64, seed=9)
        models = toy_models(refs, 16)  # native 16, naive segment 64
        cfg = make_config(Mode.NAIVE, 64, 64, 0.0, steps=10)
        result = separate(problem, models, cfg, references=refs)
        assert all(len(s) == 64 for s in result.sources)

    def test_to_dict_roundtrips_config(self):
        problem, refs = toy_problem(64, seed=10)
        models = toy_models(refs, 32)
        cfg = make_config(Mode.AR, 64, 32, 0.5, steps=5, k=2)
        d = separate(problem, models, cfg, references=refs).to_dict()
        assert d["mode"] == "ar"
        assert d["best_of_k"] == 2
        assert len(d["per_segment"]) == len(cfg.plan.offsets)
