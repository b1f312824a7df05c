"""End-to-end verification and retrieval over embedding stores."""
import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from attrs import define, field

from .audio import read_wav
from .config import Settings
from .constants import RETRIEVAL_TOP_K, EnrollStrategy
from .errors import MissingIdsError, ScoringError
from .metrics import (
    DetCurve,
    EvaluationReport,
    det_sweep,
    evaluate,
    mean_average_precision,
)
from .network import ResNetEmbedder, embed_audio, embed_concatenated
from .scoring import (
    Cohort,
    Enrollment,
    ScoreSet,
    ScoringChain,
    build_cohort,
    enrollment_score_matrix,
)
from .store import EmbeddingStore, TrialSet, WavEntry

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


log = logging.getLogger(__name__)


def cohort_to_store(cohort: Cohort) -> EmbeddingStore:
    """A cohort persists as a store keyed (and labelled) by speaker id."""
    return EmbeddingStore(
        dim=cohort.vectors.shape[1],
        records={s: (s, v) for s, v in zip(cohort.speaker_ids, cohort.vectors)},
    )


def cohort_from_store(store: EmbeddingStore) -> Cohort:
    ids = list(store)
    return Cohort(store.matrix(ids), [store.speaker(u) for u in ids])


def cohort_from_training(store: EmbeddingStore) -> Cohort:
    return build_cohort(store.records)


def scoring_chain(
    cohort: Optional[Cohort], asnorm: bool, settings: Settings = Settings()
) -> ScoringChain:
    if not asnorm:
        return ScoringChain()
    if cohort is None:
        raise ScoringError("AS-norm needs an imposter cohort")
    if settings.top_k > len(cohort):
        raise ScoringError(
            "top_k {} exceeds the cohort size {}".format(settings.top_k, len(cohort))
        )
    return ScoringChain(cohort=cohort, top_k=settings.top_k, mode=settings.cohort_mode)


@define(frozen=True, slots=True, eq=False)
class VerificationResult:
    scores: ScoreSet
    report: Optional[EvaluationReport] = field(default=None)
    curve: Optional[DetCurve] = field(default=None)


def _missing_ids(
    trials: TrialSet,
    store: EmbeddingStore,
    strategy: EnrollStrategy,
    concat_store: Optional[EmbeddingStore],
) -> List[str]:
    missing = [t.test_utterance for t in trials.trials if t.test_utterance not in store]
    for speaker in {t.enroll_speaker for t in trials.trials}:
        utts = trials.enrollment_of(speaker)
        missing.extend(u for u in utts if u not in store)
        if strategy is EnrollStrategy.UttConcat and len(utts) > 1:
            if concat_store is None or speaker not in concat_store:
                missing.append(speaker)
    return missing


def _enrollment(
    speaker: str,
    trials: TrialSet,
    store: EmbeddingStore,
    concat_store: Optional[EmbeddingStore],
) -> Enrollment:
    concat = None
    if concat_store is not None and speaker in concat_store:
        concat = concat_store.vector(speaker)
    return Enrollment(store.matrix(trials.enrollment_of(speaker)), concat)


def run_verification(
    trials: TrialSet,
    store: EmbeddingStore,
    cohort: Optional[Cohort] = None,
    strategy: Optional[EnrollStrategy] = None,
    asnorm: Optional[bool] = None,
    settings: Settings = Settings(),
    concat_store: Optional[EmbeddingStore] = None,
    system: str = "",
) -> VerificationResult:
    """
    Score every trial in file order and evaluate when the trials carry labels.

    Scores are computed as one (enroll speaker, test utterance) matrix over
    the distinct ids and gathered back into trial order.

    strategy and asnorm default to the values in settings. For UttConcat a
    speaker with several enrollment utterances must have the embedding of
    the joined audio in concat_store, keyed by the enroll speaker id.
    """
    strategy = settings.strategy if strategy is None else strategy
    asnorm = settings.asnorm if asnorm is None else asnorm
    if not len(trials):
        raise ScoringError("trial list is empty")
    missing = _missing_ids(trials, store, strategy, concat_store)
    if missing:
        raise MissingIdsError(missing)
    chain = scoring_chain(cohort, asnorm, settings)

    speakers = list(dict.fromkeys(t.enroll_speaker for t in trials.trials))
    tests = list(dict.fromkeys(t.test_utterance for t in trials.trials))
    matrix = enrollment_score_matrix(
        strategy,
        [_enrollment(s, trials, store, concat_store) for s in speakers],
        store.matrix(tests),
        chain,
        settings.normalize_after_average,
    )
    speaker_index = {s: i for i, s in enumerate(speakers)}
    test_index = {u: i for i, u in enumerate(tests)}
    rows = [speaker_index[t.enroll_speaker] for t in trials.trials]
    columns = [test_index[t.test_utterance] for t in trials.trials]
    scores = matrix[rows, columns]
    score_set = ScoreSet(
        keys=trials.keys,
        scores=scores,
        system=system,
        chain="{}/{}".format(chain.describe(), strategy.value),
    )
    log.info("Scored %d trials with %s", len(score_set), score_set.chain)
    if not trials.has_labels:
        return VerificationResult(scores=score_set)
    curve = det_sweep(score_set.scores, trials.labels())
    report = evaluate(score_set.scores, None, settings.dcf_params, curve)
    return VerificationResult(scores=score_set, report=report, curve=curve)


@define(frozen=True, slots=True)
class RetrievalHit:
    utterance_id: str
    speaker_id: str
    score: float


def retrieval_scores(
    queries: np.ndarray, pool: np.ndarray, chain: ScoringChain = ScoringChain()
) -> np.ndarray:
    """(queries, pool) score matrix, AS-normalized when the chain has a cohort."""
    return chain.score_matrix(queries, pool)


def retrieve_topk(
    queries: EmbeddingStore,
    pool: EmbeddingStore,
    k: int = RETRIEVAL_TOP_K,
    chain: ScoringChain = ScoringChain(),
) -> Dict[str, Tuple[RetrievalHit, ...]]:
    """
    The k best pool utterances per query, best first.

    Equal scores rank by utterance id ascending. A k larger than the pool
    returns the whole pool ranking.
    """
    if not len(pool):
        raise ScoringError("retrieval pool is empty")
    if k < 1:
        raise ScoringError("k must be at least 1, got {!r}".format(k))
    if k > len(pool):
        log.warning(
            "k=%d exceeds the pool size %d, returning every utterance", k, len(pool)
        )
        k = len(pool)
    query_ids = list(queries)
    pool_ids = list(pool)
    if not query_ids:
        return {}
    scores = retrieval_scores(queries.matrix(query_ids), pool.matrix(pool_ids), chain)
    id_rank = np.empty(len(pool_ids), dtype=np.int64)
    id_rank[np.argsort(np.array(pool_ids), kind="stable")] = np.arange(len(pool_ids))
    results = {}
    for query_id, row in zip(query_ids, scores):
        order = np.lexsort((id_rank, -row))[:k]
        results[query_id] = tuple(
            RetrievalHit(pool_ids[i], pool.speaker(pool_ids[i]), float(row[i]))
            for i in order
        )
    return results


def retrieval_map(
    results: Mapping[str, Sequence[RetrievalHit]],
    queries: EmbeddingStore,
    pool: EmbeddingStore,
    k: int = RETRIEVAL_TOP_K,
) -> float:
    """mAP where a pool utterance is relevant when it shares the query's speaker."""
    by_speaker: Dict[str, set] = {}
    for utt in pool:
        by_speaker.setdefault(pool.speaker(utt), set()).add(utt)
    rankings = [[hit.utterance_id for hit in hits] for hits in results.values()]
    relevance = [by_speaker.get(queries.speaker(q), set()) for q in results]
    return mean_average_precision(rankings, relevance, k)


def format_retrieval(results: Mapping[str, Sequence[RetrievalHit]]) -> str:
    return "".join(
        "{} {} {} {!r}\n".format(query, rank, hit.utterance_id, hit.score)
        for query, hits in results.items()
        for rank, hit in enumerate(hits, start=1)
    )


def embed_entries(
    net: ResNetEmbedder, entries: Sequence[WavEntry], sample_rate: int
) -> EmbeddingStore:
    embeddings = []
    for entry in entries:
        audio = read_wav(
            entry.path,
            sample_rate,
            utterance_id=entry.utterance_id,
            speaker_id=entry.speaker_id,
            genre=entry.genre,
        )
        embeddings.append(embed_audio(net, audio))
        log.debug("Embedded %r", entry.utterance_id)
    return EmbeddingStore.from_embeddings(embeddings, net.spec.emb_dim)


def embed_enrollment_concat(
    net: ResNetEmbedder,
    entries: Sequence[WavEntry],
    enrollment: Mapping[str, Sequence[str]],
    sample_rate: int,
) -> EmbeddingStore:
    """Embed each speaker's joined enrollment audio, keyed by the enroll speaker id."""
    by_id = {entry.utterance_id: entry for entry in entries}
    missing = [u for utts in enrollment.values() for u in utts if u not in by_id]
    if missing:
        raise MissingIdsError(missing)
    embeddings = []
    for speaker, utts in enrollment.items():
        buffers = [
            read_wav(by_id[u].path, sample_rate, utterance_id=u, speaker_id=speaker)
            for u in utts
        ]
        embedding = embed_concatenated(net, buffers, utterance_id=speaker)
        embeddings.append(embedding)
    return EmbeddingStore.from_embeddings(embeddings, net.spec.emb_dim)
