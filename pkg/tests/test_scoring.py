"""Cosine scoring, AS-norm, enrollment strategies and score fusion."""
import logging
import math

import numpy as np
import pytest

from rvector.constants import CohortMode, EnrollStrategy
from rvector.errors import DegenerateCohortError, ScoringError
from rvector.metrics import det_sweep, eer
from rvector.scoring import (
    Cohort,
    Enrollment,
    ScoreSet,
    ScoringChain,
    asnorm,
    asnorm_scores,
    asnorm_with_stats,
    build_cohort,
    combine_enrollment,
    cosine_matrix,
    cosine_score,
    enrollment_score_matrix,
    fuse_scores,
    fusion_weights,
    top_k_moments,
    top_k_stats,
)


@pytest.mark.parametrize(
    "a, b, expected",
    (
        pytest.param([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 1.0, id="identical"),
        pytest.param([1.0, 0.0], [0.0, 5.0], 0.0, id="orthogonal"),
        pytest.param([1.0, 1.0, 0.0], [1.0, 0.0, 0.0], math.sqrt(2) / 2, id="45 degrees"),
        pytest.param([2.0, 0.0], [-0.5, 0.0], -1.0, id="opposite"),
    ),
)
def test_cosine_examples(a, b, expected):
    assert cosine_score(np.array(a), np.array(b)) == pytest.approx(expected, abs=1e-12)


def test_cosine_symmetric_and_bounded(rng):
    for _ in range(200):
        a, b = rng.standard_normal((2, 32)) * rng.uniform(1e-3, 1e3)
        assert cosine_score(a, b) == cosine_score(b, a)
        assert abs(cosine_score(a, b)) <= 1.0


def test_cosine_zero_vector():
    with pytest.raises(ScoringError, match="zero vector"):
        cosine_score(np.zeros(4), np.ones(4))


def test_cosine_matrix_matches_pairs(rng):
    a, b = rng.standard_normal((3, 8)), rng.standard_normal((5, 8))
    matrix = cosine_matrix(a, b)
    assert matrix.shape == (3, 5)
    assert matrix[2, 4] == pytest.approx(cosine_score(a[2], b[4]), abs=1e-12)


def test_build_cohort_averages_speakers():
    v = np.array([1.0, 2.0])
    cohort = build_cohort(
        {
            "b-1": ("b", v),
            "a-1": ("a", [1.0, 0.0]),
            "a-2": ("a", [3.0, 2.0]),
        }
    )
    assert cohort.speaker_ids == ("a", "b")
    np.testing.assert_allclose(cohort.vectors, [[2.0, 1.0], [1.0, 2.0]])


def test_build_cohort_skips_zero_mean_speaker(caplog):
    records = {
        "x-1": ("x", [1.0, -1.0]),
        "x-2": ("x", [-1.0, 1.0]),
        "y-1": ("y", [0.5, 0.5]),
    }
    with caplog.at_level(logging.WARNING, logger="rvector.scoring"):
        cohort = build_cohort(records)
    assert cohort.speaker_ids == ("y",)
    assert "'x'" in caplog.text


def test_build_cohort_size(rng):
    records = {
        "spk{:04d}-u".format(i): ("spk{:04d}".format(i), rng.standard_normal(4))
        for i in range(2793)
    }
    cohort = build_cohort(records)
    assert len(cohort) == 2793
    assert list(cohort.speaker_ids) == sorted(cohort.speaker_ids)


def test_build_cohort_empty():
    with pytest.raises(ScoringError):
        build_cohort({})


def test_asnorm_example():
    assert asnorm_scores(2.0, [0.0, 2.0], [-2.0, 2.0], top_k=2) == pytest.approx(1.0)


def test_asnorm_equal_sides_is_one_sided(rng):
    mu = 0.3
    for raw in rng.uniform(-1, 1, 10):
        side = [mu - 1.0, mu + 1.0]
        assert asnorm_scores(raw, side, side, top_k=2) == pytest.approx(raw - mu)


def test_asnorm_affine_invariance(rng):
    a, b = 2.5, -0.7
    for _ in range(50):
        raw = rng.uniform(-1, 1)
        enroll, test = rng.uniform(-1, 1, (2, 50))
        plain = asnorm_scores(raw, enroll, test, top_k=10)
        moved = asnorm_scores(a * raw + b, a * enroll + b, a * test + b, top_k=10)
        assert moved == pytest.approx(plain, abs=1e-9)


def test_asnorm_increases_with_raw(rng):
    enroll, test = rng.uniform(-1, 1, (2, 40))
    values = [asnorm_scores(r, enroll, test, top_k=8) for r in np.linspace(-1, 1, 21)]
    assert np.all(np.diff(values) > 0)


def test_asnorm_degenerate_enroll_side():
    with pytest.raises(DegenerateCohortError) as excinfo:
        asnorm_scores(0.1, [0.5] * 5, [0.1, 0.2, 0.3, 0.4, 0.5], top_k=3)
    assert excinfo.value.side == "enroll"


@pytest.mark.parametrize(
    "top_k, match",
    (
        pytest.param(5, "exceeds the cohort size", id="too large"),
        pytest.param(1, "at least 2", id="too small"),
    ),
)
def test_top_k_bounds(top_k, match):
    with pytest.raises(ScoringError, match=match):
        top_k_stats([0.1, 0.2, 0.3, 0.4], top_k)


@pytest.mark.parametrize(
    "mode, mean, std",
    (
        pytest.param(CohortMode.Adaptive, 0.8, 0.1, id="adaptive"),
        pytest.param(CohortMode.Fixed, 0.5, 0.4, id="fixed"),
    ),
)
def test_cohort_selection(mode, mean, std):
    stats = top_k_stats([0.9, 0.1, 0.5, 0.7], 2, mode)
    assert stats.mean == pytest.approx(mean)
    assert stats.std == pytest.approx(std)


def test_asnorm_from_embeddings(rng):
    cohort = Cohort(rng.standard_normal((30, 8)), ["c{}".format(i) for i in range(30)])
    enroll, test = rng.standard_normal((2, 8))
    raw = cosine_score(enroll, test)
    scores = cosine_matrix(np.stack([enroll, test]), cohort.vectors)
    expected = asnorm_scores(raw, scores[0], scores[1], top_k=6)
    score = asnorm(raw, enroll, test, cohort, top_k=6)
    assert score == pytest.approx(expected, abs=1e-12)


@pytest.fixture
def chain(rng):
    ids = ["c{:02d}".format(i) for i in range(20)]
    cohort = Cohort(rng.standard_normal((20, 8)), ids)
    return ScoringChain(cohort=cohort, top_k=5)


def test_chain_describe(chain):
    assert ScoringChain().describe() == "cosine"
    assert chain.describe() == "cosine+asnorm(top_k=5,adaptive)"


@pytest.mark.parametrize("normalized", (False, True), ids=("raw", "asnorm"))
def test_single_utterance_strategies_agree(rng, chain, normalized):
    chain = chain if normalized else ScoringChain()
    enroll, test = rng.standard_normal((2, 8))
    materials = Enrollment([enroll])
    scores = [combine_enrollment(s, materials, test, chain) for s in EnrollStrategy]
    assert scores[0] == scores[1] == scores[2]


def test_emb_avg_of_copies(rng, chain):
    e, test = rng.standard_normal((2, 8))
    single = combine_enrollment(EnrollStrategy.EmbAvg, Enrollment([e]), test, chain)
    for n in (2, 3, 7):
        copies = combine_enrollment(
            EnrollStrategy.EmbAvg, Enrollment([e] * n), test, chain
        )
        assert copies == pytest.approx(single, abs=1e-12)


def test_score_avg_averages_scores():
    test = np.array([1.0, 0.0])
    materials = Enrollment([[0.2, math.sqrt(1 - 0.04)], [0.4, math.sqrt(1 - 0.16)]])
    score = combine_enrollment(EnrollStrategy.ScoreAvg, materials, test)
    assert score == pytest.approx(0.3, abs=1e-12)


def test_score_avg_normalized_after_average(rng, chain):
    embeddings = rng.standard_normal((3, 8))
    test = rng.standard_normal(8)
    materials = Enrollment(embeddings)
    raw = np.mean([cosine_score(e, test) for e in embeddings])
    enroll_stats = chain.stats(embeddings.mean(axis=0), "enroll")[0]
    test_stats = chain.stats(test, "test")[0]
    expected = asnorm_with_stats(raw, enroll_stats, test_stats)
    after = combine_enrollment(EnrollStrategy.ScoreAvg, materials, test, chain, True)
    before = combine_enrollment(EnrollStrategy.ScoreAvg, materials, test, chain, False)
    assert after == pytest.approx(expected, abs=1e-12)
    assert after != before


def test_utt_concat_needs_joined_embedding(rng):
    embeddings = rng.standard_normal((2, 8))
    with pytest.raises(ScoringError, match="joined enrollment audio"):
        combine_enrollment(
            EnrollStrategy.UttConcat, Enrollment(embeddings), embeddings[0]
        )
    joined = rng.standard_normal(8)
    test = rng.standard_normal(8)
    enrollment = Enrollment(embeddings, joined)
    score = combine_enrollment(EnrollStrategy.UttConcat, enrollment, test)
    assert score == pytest.approx(cosine_score(joined, test))


def test_empty_enrollment():
    with pytest.raises(ScoringError, match="no utterances"):
        Enrollment(np.zeros((0, 8)))


def test_unknown_strategy(rng):
    with pytest.raises(ScoringError, match="unknown enrollment strategy"):
        combine_enrollment("emb-avg", Enrollment(rng.standard_normal((1, 4))), np.ones(4))


@pytest.mark.parametrize("after", (False, True), ids=("before", "after"))
@pytest.mark.parametrize("normalized", (False, True), ids=("raw", "asnorm"))
@pytest.mark.parametrize("strategy", list(EnrollStrategy), ids=lambda s: s.value)
def test_score_matrix_matches_per_trial_scores(rng, chain, strategy, normalized, after):
    chain = chain if normalized else ScoringChain()
    enrollments = [
        Enrollment(rng.standard_normal((n, 8)), rng.standard_normal(8))
        for n in (1, 2, 5, 3)
    ]
    tests = rng.standard_normal((6, 8))
    matrix = enrollment_score_matrix(strategy, enrollments, tests, chain, after)
    assert matrix.shape == (4, 6)
    for i, materials in enumerate(enrollments):
        for j, test in enumerate(tests):
            expected = combine_enrollment(strategy, materials, test, chain, after)
            assert matrix[i, j] == pytest.approx(expected, abs=1e-12)


def test_score_matrix_rejects_unknown_strategy(rng):
    with pytest.raises(ScoringError, match="unknown enrollment strategy"):
        enrollment_score_matrix("emb-avg", [Enrollment(np.ones(4))], np.ones((1, 4)))


def test_top_k_moments_rows_match_single_row_stats(rng):
    scores = rng.uniform(-1, 1, (5, 30))
    mean, std = top_k_moments(scores, 7)
    for row, m, s in zip(scores, mean, std):
        stats = top_k_stats(row, 7)
        assert (m, s) == pytest.approx((stats.mean, stats.std), abs=1e-12)


def test_top_k_moments_names_degenerate_side(rng):
    scores = np.vstack([rng.uniform(-1, 1, 10), np.full(10, 0.3)])
    with pytest.raises(DegenerateCohortError) as excinfo:
        top_k_moments(scores, 4, side="test")
    assert excinfo.value.side == "test"


def _score_set(values, system="sys"):
    return ScoreSet(
        keys=[("e{}".format(i), "t{}".format(i)) for i in range(len(values))],
        scores=values,
        system=system,
    )


def test_fusion_weights_from_min_dcf():
    np.testing.assert_allclose(fusion_weights([0.32, 0.16]), [1 / 3, 2 / 3])


def test_fusion_of_one_system_is_znorm(rng):
    values = rng.standard_normal(50) * 3 + 1
    fused = fuse_scores([_score_set(values)])
    np.testing.assert_allclose(fused.scores, (values - values.mean()) / values.std())


def test_fusion_of_identical_systems_keeps_ranks(rng):
    values = rng.standard_normal(50)
    fused = fuse_scores([_score_set(values, "a"), _score_set(values, "b")], [0.3, 0.4])
    np.testing.assert_array_equal(np.argsort(fused.scores), np.argsort(values))
    assert fused.system == "fusion(a,b)"


def test_fusion_ignores_affine_rescaling(rng):
    a, b = rng.standard_normal((2, 60))
    plain = fuse_scores([_score_set(a, "a"), _score_set(b, "b")], [0.3, 0.2])
    moved = fuse_scores([_score_set(4 * a - 2, "a"), _score_set(b, "b")], [0.3, 0.2])
    np.testing.assert_allclose(moved.scores, plain.scores, atol=1e-9)


def test_fusion_eer_ignores_monotone_transforms(rng):
    labels = np.arange(400) < 100
    values = rng.standard_normal(400) + 1.5 * labels
    reference = eer(det_sweep(values, labels))
    for transform in (lambda s: 2 * s + 3, np.tanh):
        fused = fuse_scores([_score_set(transform(values))])
        assert eer(det_sweep(fused.scores, labels)) == pytest.approx(reference, abs=1e-12)


def test_fusion_rejects_misaligned_sets():
    other = ScoreSet(keys=[("x", "y"), ("e1", "t1")], scores=[0.1, 0.2], system="other")
    with pytest.raises(ScoringError, match="not aligned"):
        fuse_scores([_score_set([0.3, 0.4]), other])


def test_fusion_rejects_non_positive_quality():
    with pytest.raises(ScoringError, match="positive minDCF"):
        fusion_weights([0.3, 0.0])


@pytest.mark.parametrize(
    "weights",
    (
        pytest.param([1.0, -0.5], id="negative"),
        pytest.param([0.0, 0.0], id="zero sum"),
        pytest.param([1.0, float("nan")], id="nan"),
    ),
)
def test_fusion_rejects_bad_weights(rng, weights):
    a, b = rng.standard_normal((2, 20))
    with pytest.raises(ScoringError, match="non-negative with a positive sum"):
        fuse_scores([_score_set(a, "a"), _score_set(b, "b")], weights=weights)


def test_fusion_accepts_a_zero_weight(rng):
    a, b = rng.standard_normal((2, 20))
    fused = fuse_scores([_score_set(a, "a"), _score_set(b, "b")], weights=[0.0, 2.0])
    np.testing.assert_allclose(fused.scores, (b - b.mean()) / b.std())


@pytest.mark.parametrize(
    "keys, scores, match",
    (
        pytest.param([("e", "t")], [0.1, 0.2], "1 trial keys but 2", id="length"),
        pytest.param([("e", "t")], [float("nan")], "NaN", id="nan"),
    ),
)
def test_score_set_validation(keys, scores, match):
    with pytest.raises(ScoringError, match=match):
        ScoreSet(keys=keys, scores=scores)
