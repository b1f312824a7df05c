"""Cosine scoring, adaptive score normalization, enrollment combination and fusion."""
import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from attrs import define, field

from .constants import DEFAULT_TOP_K, CohortMode, EnrollStrategy
from .errors import DegenerateCohortError, ScoringError

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


log = logging.getLogger(__name__)


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ScoringError("cosine score is undefined for a zero vector")
    return vectors / norms


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    a_hat, b_hat = _unit_rows(a)[0], _unit_rows(b)[0]
    return float(np.clip(np.dot(a_hat, b_hat), -1.0, 1.0))


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine scores, shape (len(a), len(b))."""
    return np.clip(_unit_rows(a) @ _unit_rows(b).T, -1.0, 1.0)


@define(frozen=True, slots=True, eq=False)
class Cohort:
    """Imposter cohort: one mean embedding per training speaker."""

    vectors: np.ndarray = field(
        converter=lambda v: np.atleast_2d(np.asarray(v, np.float64))
    )
    speaker_ids: Tuple[str, ...] = field(converter=tuple)

    def __len__(self) -> int:
        return len(self.speaker_ids)

    def head(self, size: int) -> "Cohort":
        return Cohort(self.vectors[:size], self.speaker_ids[:size])


def build_cohort(records: Dict[str, Tuple[str, np.ndarray]]) -> Cohort:
    """
    Average the embeddings of each speaker, speakers in sorted id order.

    :param records: utterance_id -> (speaker_id, vector), e.g. EmbeddingStore.records
    """
    if not records:
        raise ScoringError("cannot build a cohort from an empty store")
    by_speaker: Dict[str, list] = {}
    for speaker_id, vector in records.values():
        by_speaker.setdefault(speaker_id, []).append(np.asarray(vector, np.float64))
    speaker_ids, vectors = [], []
    for speaker_id in sorted(by_speaker):
        mean = np.mean(by_speaker[speaker_id], axis=0)
        if not np.any(mean):
            log.warning("Exclude cohort speaker %r: mean embedding is zero", speaker_id)
            continue
        speaker_ids.append(speaker_id)
        vectors.append(mean)
    if not vectors:
        raise ScoringError("every cohort speaker is degenerate")
    return Cohort(np.stack(vectors), speaker_ids)


@define(frozen=True, slots=True)
class CohortStats:
    mean: float
    std: float


def top_k_moments(
    cohort_scores: np.ndarray,
    top_k: int,
    mode: CohortMode = CohortMode.Adaptive,
    side: str = "",
) -> Tuple[np.ndarray, np.ndarray]:
    """Row-wise mean and population std of the selected cohort scores (last axis)."""
    cohort_scores = np.atleast_2d(np.asarray(cohort_scores, dtype=np.float64))
    if top_k > cohort_scores.shape[-1]:
        raise ScoringError(
            "top_k {} exceeds the cohort size {}".format(top_k, cohort_scores.shape[-1])
        )
    if top_k < 2:
        raise ScoringError("top_k must be at least 2, got {}".format(top_k))
    if mode is CohortMode.Adaptive:
        selected = np.partition(cohort_scores, -top_k, axis=-1)[..., -top_k:]
    else:
        selected = cohort_scores[..., :top_k]
    std = selected.std(axis=-1)
    if np.any(std == 0.0):
        raise DegenerateCohortError(side or "cohort")
    return selected.mean(axis=-1), std


def top_k_stats(
    cohort_scores: np.ndarray,
    top_k: int,
    mode: CohortMode = CohortMode.Adaptive,
    side: str = "",
) -> CohortStats:
    """Mean and population std of one row of cohort scores."""
    mean, std = top_k_moments(np.reshape(cohort_scores, (1, -1)), top_k, mode, side)
    return CohortStats(mean=float(mean[0]), std=float(std[0]))


def asnorm_with_stats(raw: float, enroll: CohortStats, test: CohortStats) -> float:
    """Symmetric z-normalization of raw against both sides' cohort statistics."""
    return 0.5 * ((raw - enroll.mean) / enroll.std + (raw - test.mean) / test.std)


def asnorm_matrix(
    raw: np.ndarray,
    enroll_moments: Tuple[np.ndarray, np.ndarray],
    test_moments: Tuple[np.ndarray, np.ndarray],
) -> np.ndarray:
    """asnorm_with_stats over a (enroll, test) matrix of raw scores."""
    e_mean, e_std = (m[:, np.newaxis] for m in enroll_moments)
    t_mean, t_std = (m[np.newaxis, :] for m in test_moments)
    return 0.5 * ((raw - e_mean) / e_std + (raw - t_mean) / t_std)


def asnorm_scores(
    raw: float,
    enroll_cohort_scores: np.ndarray,
    test_cohort_scores: np.ndarray,
    top_k: int = DEFAULT_TOP_K,
    mode: CohortMode = CohortMode.Adaptive,
) -> float:
    """AS-norm from precomputed cohort scores of each side."""
    return asnorm_with_stats(
        raw,
        top_k_stats(enroll_cohort_scores, top_k, mode, "enroll"),
        top_k_stats(test_cohort_scores, top_k, mode, "test"),
    )


def asnorm(
    raw: float,
    enroll: np.ndarray,
    test: np.ndarray,
    cohort: Cohort,
    top_k: int = DEFAULT_TOP_K,
    mode: CohortMode = CohortMode.Adaptive,
) -> float:
    scores = cosine_matrix(np.stack([enroll, test]), cohort.vectors)
    return asnorm_scores(raw, scores[0], scores[1], top_k, mode)


@define(frozen=True, slots=True)
class ScoringChain:
    """Cosine scoring with optional AS-norm against a cohort."""

    cohort: Optional[Cohort] = field(default=None)
    top_k: int = field(default=DEFAULT_TOP_K)
    mode: CohortMode = field(default=CohortMode.Adaptive)

    @property
    def normalized(self) -> bool:
        return self.cohort is not None

    def describe(self) -> str:
        if not self.normalized:
            return "cosine"
        return "cosine+asnorm(top_k={},{})".format(self.top_k, self.mode.value)

    def moments(self, vectors: np.ndarray, side: str) -> Tuple[np.ndarray, np.ndarray]:
        """Cohort score mean and std for each row of vectors."""
        cohort_scores = cosine_matrix(vectors, self.cohort.vectors)
        return top_k_moments(cohort_scores, self.top_k, self.mode, side)

    def stats(self, vectors: np.ndarray, side: str) -> Sequence[CohortStats]:
        """Cohort statistics for each row of vectors."""
        mean, std = self.moments(vectors, side)
        return [CohortStats(mean=float(m), std=float(s)) for m, s in zip(mean, std)]

    def score_matrix(self, enroll: np.ndarray, test: np.ndarray) -> np.ndarray:
        """(enroll, test) scores, AS-normalized when the chain has a cohort."""
        raw = cosine_matrix(enroll, test)
        if not self.normalized:
            return raw
        return asnorm_matrix(
            raw, self.moments(enroll, "enroll"), self.moments(test, "test")
        )

    def score(
        self,
        enroll: np.ndarray,
        test: np.ndarray,
        enroll_stats: Optional[CohortStats] = None,
        test_stats: Optional[CohortStats] = None,
    ) -> float:
        raw = cosine_score(enroll, test)
        if not self.normalized:
            return raw
        if enroll_stats is None:
            enroll_stats = self.stats(enroll, "enroll")[0]
        if test_stats is None:
            test_stats = self.stats(test, "test")[0]
        return asnorm_with_stats(raw, enroll_stats, test_stats)


@define(frozen=True, slots=True, eq=False)
class Enrollment:
    """Per-utterance enrollment embeddings, optionally the joined-audio embedding."""

    embeddings: np.ndarray = field(
        converter=lambda v: np.atleast_2d(np.asarray(v, dtype=np.float64))
    )
    concat_embedding: Optional[np.ndarray] = field(default=None)

    def __attrs_post_init__(self) -> None:
        if self.embeddings.shape[0] == 0 or self.embeddings.size == 0:
            raise ScoringError("enrollment has no utterances")

    def concatenated(self) -> np.ndarray:
        if self.concat_embedding is not None:
            return np.asarray(self.concat_embedding, dtype=np.float64)
        if self.embeddings.shape[0] == 1:
            return self.embeddings[0]
        raise ScoringError(
            "utterance concatenation needs the embedding of the joined enrollment audio"
        )

    def scored_vectors(
        self, strategy: EnrollStrategy, normalize_after_average: bool = False
    ) -> np.ndarray:
        """Rows whose cohort statistics AS-norm needs on the enroll side."""
        if strategy is EnrollStrategy.UttConcat:
            return self.concatenated()[np.newaxis]
        if strategy is EnrollStrategy.EmbAvg or normalize_after_average:
            return self.embeddings.mean(axis=0)[np.newaxis]
        return self.embeddings


def combine_enrollment(
    strategy: EnrollStrategy,
    materials: Enrollment,
    test: np.ndarray,
    chain: ScoringChain = ScoringChain(),
    normalize_after_average: bool = False,
    test_stats: Optional[CohortStats] = None,
    enroll_stats: Optional[Sequence[CohortStats]] = None,
) -> float:
    """
    Score a test embedding against a multi-utterance enrollment.

    UttConcat scores the embedding of the joined audio, EmbAvg the mean
    embedding, ScoreAvg averages per-utterance scores. With AS-norm,
    ScoreAvg normalizes each utterance score before averaging unless
    normalize_after_average is set, in which case the averaged raw score is
    normalized against the mean enrollment embedding's cohort statistics.

    :param enroll_stats: precomputed statistics of
        ``materials.scored_vectors(strategy, normalize_after_average)``
    """
    if not isinstance(strategy, EnrollStrategy):
        raise ScoringError("unknown enrollment strategy {!r}".format(strategy))
    vectors = materials.scored_vectors(strategy, normalize_after_average)
    if not chain.normalized:
        if strategy is EnrollStrategy.ScoreAvg:
            return float(np.mean([cosine_score(e, test) for e in materials.embeddings]))
        return cosine_score(vectors[0], test)
    if test_stats is None:
        test_stats = chain.stats(test, "test")[0]
    if enroll_stats is None:
        enroll_stats = chain.stats(vectors, "enroll")
    if len(enroll_stats) != vectors.shape[0]:
        raise ScoringError(
            "{} enroll statistics for {} enroll vectors".format(
                len(enroll_stats), vectors.shape[0]
            )
        )
    if strategy is EnrollStrategy.ScoreAvg and normalize_after_average:
        raw = float(np.mean([cosine_score(e, test) for e in materials.embeddings]))
        return asnorm_with_stats(raw, enroll_stats[0], test_stats)
    return float(
        np.mean(
            [
                chain.score(e, test, stats, test_stats)
                for e, stats in zip(vectors, enroll_stats)
            ]
        )
    )


def enrollment_score_matrix(
    strategy: EnrollStrategy,
    enrollments: Sequence[Enrollment],
    tests: np.ndarray,
    chain: ScoringChain = ScoringChain(),
    normalize_after_average: bool = False,
) -> np.ndarray:
    """
    combine_enrollment for every (enrollment, test row) pair at once.

    Cohort statistics are computed once per enrollment vector and once per
    test row. Row i of the result belongs to enrollments[i].
    """
    if not isinstance(strategy, EnrollStrategy):
        raise ScoringError("unknown enrollment strategy {!r}".format(strategy))
    if not enrollments:
        raise ScoringError("no enrollments to score")
    if strategy is not EnrollStrategy.ScoreAvg:
        vectors = np.stack([e.scored_vectors(strategy)[0] for e in enrollments])
        return chain.score_matrix(vectors, tests)

    counts = np.array([e.embeddings.shape[0] for e in enrollments])
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    utterances = np.concatenate([e.embeddings for e in enrollments])
    if chain.normalized and not normalize_after_average:
        per_utterance = chain.score_matrix(utterances, tests)
        return np.add.reduceat(per_utterance, starts, axis=0) / counts[:, np.newaxis]
    averaged = np.add.reduceat(cosine_matrix(utterances, tests), starts, axis=0)
    averaged /= counts[:, np.newaxis]
    if not chain.normalized:
        return averaged
    means = np.stack([e.embeddings.mean(axis=0) for e in enrollments])
    return asnorm_matrix(
        averaged, chain.moments(means, "enroll"), chain.moments(tests, "test")
    )


def _as_keys(value) -> Tuple[Tuple[str, str], ...]:
    return tuple((str(e), str(t)) for e, t in value)


def _check_scores(instance, attribute, value) -> None:
    if not np.all(np.isfinite(value)):
        raise ScoringError("scores of {!r} contain NaN or Inf".format(instance.system))


@define(frozen=True, slots=True, eq=False)
class ScoreSet:
    """Scores aligned index-for-index with a trial list, plus provenance."""

    keys: Tuple[Tuple[str, str], ...] = field(converter=_as_keys)
    scores: np.ndarray = field(
        converter=lambda v: np.asarray(v, dtype=np.float64), validator=_check_scores
    )
    system: str = field(default="")
    chain: str = field(default="")

    def __attrs_post_init__(self) -> None:
        if len(self.keys) != self.scores.size:
            raise ScoringError(
                "{} trial keys but {} scores".format(len(self.keys), self.scores.size)
            )

    def __len__(self) -> int:
        return len(self.keys)


def fusion_weights(quality: Sequence[float]) -> np.ndarray:
    """Weights proportional to 1/minDCF, summing to one."""
    quality = np.asarray(quality, dtype=np.float64)
    if np.any(quality <= 0):
        raise ScoringError(
            "fusion needs positive minDCF values, got {!r}".format(quality)
        )
    inverse = 1.0 / quality
    return inverse / inverse.sum()


def znorm(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    std = scores.std()
    if std == 0.0:
        raise ScoringError("cannot z-normalize constant scores")
    return (scores - scores.mean()) / std


def fuse_scores(
    score_sets: Sequence[ScoreSet],
    quality: Optional[Sequence[float]] = None,
    weights: Optional[Sequence[float]] = None,
) -> ScoreSet:
    """
    Weighted mean of per-system z-normalized scores.

    Weights default to 1/minDCF of each system (quality); explicit weights
    override them and are renormalized to sum to one.
    """
    if not score_sets:
        raise ScoringError("nothing to fuse")
    keys = score_sets[0].keys
    for other in score_sets[1:]:
        if other.keys != keys:
            raise ScoringError(
                "score set {!r} is not aligned with {!r}".format(
                    other.system, score_sets[0].system
                )
            )
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if np.any(~np.isfinite(weights)) or np.any(weights < 0) or weights.sum() <= 0:
            raise ScoringError(
                "fusion weights must be non-negative with a positive sum, "
                "got {!r}".format(weights.tolist())
            )
        weights = weights / weights.sum()
    elif quality is not None:
        weights = fusion_weights(quality)
    else:
        weights = np.full(len(score_sets), 1.0 / len(score_sets))
    if len(weights) != len(score_sets):
        raise ScoringError(
            "{} weights for {} score sets".format(len(weights), len(score_sets))
        )
    fused = sum(w * znorm(s.scores) for w, s in zip(weights, score_sets))
    return ScoreSet(
        keys=keys,
        scores=fused,
        system="fusion({})".format(",".join(s.system for s in score_sets)),
        chain="znorm+weighted-mean",
    )
