"""End-to-end verification, AS-norm benefit and top-k retrieval."""
import logging

import librosa
import numpy as np
import pytest
import soundfile

from rvector.audio import AudioBuffer, add_noise
from rvector.config import Settings
from rvector.constants import BlockKind, EnrollStrategy, TrialLabel
from rvector.errors import MissingIdsError, ScoringError
from rvector.pipeline import (
    cohort_from_store,
    cohort_from_training,
    cohort_to_store,
    embed_enrollment_concat,
    embed_entries,
    format_retrieval,
    retrieval_map,
    retrieval_scores,
    retrieve_topk,
    run_verification,
    scoring_chain,
)
from rvector.network import NetSpec, build_network, embed_audio
from rvector.scoring import ScoringChain, asnorm, cosine_score
from rvector.store import EmbeddingStore, TrialPair, TrialSet, WavEntry, write_scores
from rvector.training import stage_one_plan, stage_two_plan, train_two_stage


def all_pairs(store, enroll_utts=1):
    """Every speaker enrolls with its first utterances and is tried on the rest."""
    speakers = sorted({store.speaker(u) for u in store})
    enrollment = {
        s: tuple("{}-utt{}".format(s, i) for i in range(enroll_utts)) for s in speakers
    }
    enrolled = {u for utts in enrollment.values() for u in utts}
    trials = [
        TrialPair(
            s,
            utt,
            TrialLabel.Target if store.speaker(utt) == s else TrialLabel.Nontarget,
        )
        for s in speakers
        for utt in store
        if utt not in enrolled
    ]
    return TrialSet(trials, enrollment)


def concat_store_for(store, trials):
    """Frame-mean embedder stand-in: joined audio embeds to the utterance mean."""
    return EmbeddingStore(
        dim=store.dim,
        records={
            s: (s, store.matrix(utts).mean(axis=0))
            for s, utts in trials.enrollment.items()
        },
    )


def test_separable_speakers_score_perfectly(make_store):
    store = make_store(n_speakers=5, per_speaker=3, noise=0.01)
    trials = all_pairs(store)
    result = run_verification(trials, store, asnorm=False)
    assert result.scores.keys == trials.keys
    assert result.report.eer == 0.0
    assert result.report.min_dcf == 0.0
    assert result.scores.chain == "cosine/emb-avg"


def test_scores_are_reproducible(tmp_path, make_store):
    store = make_store(n_speakers=6, per_speaker=4)
    cohort = cohort_from_training(make_store(n_speakers=12, prefix="coh"))
    trials = all_pairs(store)
    settings = Settings(top_k=5)
    outputs = []
    for name in ("first", "second"):
        result = run_verification(trials, store, cohort, settings=settings)
        path = tmp_path / name
        write_scores(str(path), result.scores)
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]


@pytest.mark.parametrize("strategy", list(EnrollStrategy), ids=lambda s: s.value)
@pytest.mark.parametrize("asnorm_on", (False, True), ids=("raw", "asnorm"))
def test_every_strategy_reports(make_store, strategy, asnorm_on):
    store = make_store(n_speakers=6, per_speaker=4)
    cohort = cohort_from_training(make_store(n_speakers=12, prefix="coh"))
    trials = all_pairs(store, enroll_utts=2)
    result = run_verification(
        trials,
        store,
        cohort,
        strategy=strategy,
        asnorm=asnorm_on,
        settings=Settings(top_k=5),
        concat_store=concat_store_for(store, trials),
    )
    assert len(result.scores) == len(trials)
    assert result.report.n_target == 12
    assert result.report.n_nontarget == 60
    assert 0.0 <= result.report.eer <= 100.0
    assert len(result.curve) >= 3


def test_unlabelled_trials_have_no_report(make_store):
    store = make_store()
    trials = TrialSet(
        [TrialPair("spk000", "spk001-utt1"), TrialPair("spk001", "spk000-utt2")]
    )
    result = run_verification(trials, store, asnorm=False)
    assert result.report is None
    assert len(result.scores) == 2


def test_missing_ids_are_listed(make_store):
    store = make_store()
    trials = TrialSet(
        [TrialPair("spk000", "nobody-utt"), TrialPair("ghost", "spk001-utt1")],
        {"spk000": ("spk000-utt0",), "ghost": ("ghost-utt0",)},
    )
    with pytest.raises(MissingIdsError) as excinfo:
        run_verification(trials, store, asnorm=False)
    assert excinfo.value.missing == ("ghost-utt0", "nobody-utt")


def test_utt_concat_requires_joined_embedding(make_store):
    store = make_store()
    trials = all_pairs(store, enroll_utts=2)
    with pytest.raises(MissingIdsError, match="spk003"):
        run_verification(trials, store, strategy=EnrollStrategy.UttConcat, asnorm=False)


def test_empty_trials(make_store):
    with pytest.raises(ScoringError, match="empty"):
        run_verification(TrialSet([]), make_store(), asnorm=False)


def test_asnorm_needs_a_large_enough_cohort(make_store):
    store = make_store()
    cohort = cohort_from_training(make_store(n_speakers=4, prefix="coh"))
    with pytest.raises(ScoringError, match="needs an imposter cohort"):
        run_verification(all_pairs(store), store, None, asnorm=True)
    with pytest.raises(ScoringError, match="exceeds the cohort size"):
        run_verification(all_pairs(store), store, cohort, settings=Settings(top_k=5))


def test_cohort_store_keeps_speakers(make_store):
    cohort = cohort_from_training(make_store(n_speakers=7, prefix="coh"))
    restored = cohort_from_store(cohort_to_store(cohort))
    assert restored.speaker_ids == cohort.speaker_ids
    np.testing.assert_allclose(restored.vectors, cohort.vectors, rtol=1e-6)


def test_scoring_chain_without_asnorm():
    assert scoring_chain(None, asnorm=False) == ScoringChain()


SAMPLE_RATE = 16000
TINY_NET = NetSpec(BlockKind.Basic, (1, 1, 1, 1), base_width=8, emb_dim=64)


def _voice(rng):
    """Tone frequencies (spread on the mel scale) and a syllable rate."""
    mels = rng.uniform(librosa.hz_to_mel(150.0), librosa.hz_to_mel(6000.0), size=3)
    return librosa.mel_to_hz(mels), rng.uniform(2.0, 7.0)


def _speak(rng, voice, seconds=1.0, **ids):
    """Gated tones over a quiet floor; per-call jitter on pitch and rhythm."""
    tones, rate = voice
    t = np.arange(int(seconds * SAMPLE_RATE)) / SAMPLE_RATE
    samples = 0.003 * rng.standard_normal(t.size)
    for f in tones * rng.uniform(0.98, 1.02, size=tones.size):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        gate = (0.5 + 0.5 * np.sin(2.0 * np.pi * rate * t + phase)) ** 2
        samples += 0.15 * gate * np.sin(2.0 * np.pi * f * t)
    return AudioBuffer(samples=samples, sample_rate=SAMPLE_RATE, **ids)


def _benchmark_corpus(tmp_path, rng, n_speakers=30, n_cohort=60):
    """
    Verification trials over embeddings from a small ResNet.

    Embeddings are projected on the class directions of a two-stage head
    trained on the cohort speakers. Test utterances are mixed with one shared
    noise at SNRs between -10 and 15 dB, which moves every raw score of a test
    utterance together. UttConcat enrollments embed the joined WAV files.
    """
    net = build_network(TINY_NET, seed=5)

    training, labels = [], []
    for s in range(n_cohort):
        voice = _voice(rng)
        for i in range(3):
            speaker = "coh{:03d}".format(s)
            audio = _speak(rng, voice, utterance_id="{}-u{}".format(speaker, i))
            training.append(embed_audio(net, audio).vector)
            labels.append(s)
    result = train_two_stage(
        np.array(training),
        labels,
        n_cohort,
        stage_one_plan(speed_perturb=False).scaled(20),
        stage_two_plan().scaled(10),
        seed=2,
    )
    directions = result.head.normalized()

    def project(vector):
        vector = np.asarray(vector, dtype=np.float64)
        return directions @ (vector / np.linalg.norm(vector))

    cohort_records = {
        "coh{:03d}-u{}".format(j // 3, j % 3): ("coh{:03d}".format(j // 3), project(v))
        for j, v in enumerate(training)
    }
    cohort = cohort_from_training(EmbeddingStore(dim=n_cohort, records=cohort_records))

    noise = AudioBuffer(samples=np.clip(0.3 * rng.standard_normal(SAMPLE_RATE), -1, 1))
    entries, records, enrollment = [], {}, {}
    for s in range(n_speakers):
        speaker = "spk{:02d}".format(s)
        voice = _voice(rng)
        utts = []
        for i in range(3):
            utt = "{}-enr{}".format(speaker, i)
            path = tmp_path / (utt + ".wav")
            audio = _speak(rng, voice, utterance_id=utt)
            soundfile.write(str(path), audio.samples, SAMPLE_RATE, subtype="PCM_16")
            entries.append(WavEntry(utt, speaker, str(path)))
            utts.append(utt)
        enrollment[speaker] = tuple(utts)
        for i in range(3):
            utt = "{}-tst{}".format(speaker, i)
            clean = _speak(rng, voice, utterance_id=utt, speaker_id=speaker)
            noisy = add_noise(clean, noise, rng.uniform(-10.0, 15.0))
            records[utt] = (speaker, project(embed_audio(net, noisy).vector))
    enrolled = embed_entries(net, entries, SAMPLE_RATE)
    for utt in enrolled:
        records[utt] = (enrolled.speaker(utt), project(enrolled.vector(utt)))
    store = EmbeddingStore(dim=n_cohort, records=records)

    joined = embed_enrollment_concat(net, entries, enrollment, SAMPLE_RATE)
    concat_store = EmbeddingStore(
        dim=n_cohort,
        records={s: (s, project(joined.vector(s))) for s in joined},
    )

    tests = [u for u in store if "-tst" in u]
    trials = TrialSet(
        [
            TrialPair(
                s,
                t,
                TrialLabel.Target if store.speaker(t) == s else TrialLabel.Nontarget,
            )
            for s in enrollment
            for t in tests
        ],
        enrollment,
    )
    return store, cohort, trials, concat_store


@pytest.mark.slow
def test_asnorm_with_embedding_average_beats_raw_concatenation(tmp_path, rng):
    store, cohort, trials, concat_store = _benchmark_corpus(tmp_path, rng)
    settings = Settings(top_k=20)
    raw = run_verification(
        trials,
        store,
        cohort,
        strategy=EnrollStrategy.UttConcat,
        asnorm=False,
        settings=settings,
        concat_store=concat_store,
    )
    normalized = run_verification(
        trials,
        store,
        cohort,
        strategy=EnrollStrategy.EmbAvg,
        asnorm=True,
        settings=settings,
    )
    assert raw.report.n_target == 90
    assert normalized.report.eer < raw.report.eer


def _sorted_oracle(row, pool_ids, k):
    order = sorted(range(len(pool_ids)), key=lambda i: (-row[i], pool_ids[i]))
    return [(pool_ids[i], row[i]) for i in order[:k]]


def test_retrieval_matches_full_sort(rng):
    for _ in range(200):
        size = int(rng.integers(10, 5001))
        vectors = rng.standard_normal((size, 8))
        # repeated vectors give exactly tied scores
        repeats = rng.integers(size, size=size // 5)
        vectors[rng.integers(size, size=repeats.size)] = vectors[repeats]
        ids = ["p{}".format(i) for i in rng.permutation(size)]
        records = {
            u: ("s{}".format(i % 7), v) for i, (u, v) in enumerate(zip(ids, vectors))
        }
        pool = EmbeddingStore(dim=8, records=records)
        queries = EmbeddingStore(
            dim=8,
            records={
                "q{}".format(i): ("s{}".format(i), rng.standard_normal(8))
                for i in range(2)
            },
        )
        k = int(rng.integers(1, 20))
        results = retrieve_topk(queries, pool, k)
        pool_ids = list(pool)
        scores = retrieval_scores(queries.matrix(list(queries)), pool.matrix(pool_ids))
        for query, row in zip(queries, scores):
            expected = _sorted_oracle(row, pool_ids, k)
            assert [h.utterance_id for h in results[query]] == [u for u, _ in expected]
            assert [h.score for h in results[query]] == [float(s) for _, s in expected]


def test_retrieval_finds_itself_first(make_store):
    pool = make_store(n_speakers=4, per_speaker=5)
    query = EmbeddingStore(dim=16, records={"q": ("spk002", pool.vector("spk002-utt3"))})
    hits = retrieve_topk(query, pool, k=3)["q"]
    assert hits[0].utterance_id == "spk002-utt3"
    assert hits[0].score == pytest.approx(1.0)
    assert hits[0].speaker_id == "spk002"


def test_retrieval_k_larger_than_pool(make_store, caplog):
    pool = make_store(n_speakers=1, per_speaker=3)
    query = EmbeddingStore(dim=16, records={"q": ("spk000", np.ones(16))})
    with caplog.at_level(logging.WARNING, logger="rvector.pipeline"):
        hits = retrieve_topk(query, pool, k=10)["q"]
    assert len(hits) == 3
    assert "exceeds the pool size" in caplog.text


def test_retrieval_with_asnorm(make_store):
    pool = make_store(n_speakers=4, per_speaker=3)
    cohort = cohort_from_training(make_store(n_speakers=10, prefix="coh"))
    chain = ScoringChain(cohort=cohort, top_k=4)
    queries = make_store(n_speakers=2, per_speaker=1, prefix="q")
    scores = retrieval_scores(
        queries.matrix(list(queries)), pool.matrix(list(pool)), chain
    )
    q, p = queries.vector("q001-utt0"), pool.vector("spk003-utt2")
    raw = cosine_score(q, p)
    expected = asnorm(raw, q, p, cohort, 4)
    assert scores[1, len(pool) - 1] == pytest.approx(expected, abs=1e-9)


def test_retrieval_map_and_output(make_store):
    pool = make_store(n_speakers=3, per_speaker=4, noise=0.01)
    queries = EmbeddingStore(
        dim=16,
        records={
            "q{}".format(s): (
                "spk{:03d}".format(s),
                pool.vector("spk{:03d}-utt0".format(s)),
            )
            for s in range(3)
        },
    )
    results = retrieve_topk(queries, pool, k=4)
    assert retrieval_map(results, queries, pool, k=4) == pytest.approx(1.0)
    lines = format_retrieval(results).splitlines()
    assert len(lines) == 12
    assert lines[0].split()[:3] == ["q0", "1", "spk000-utt0"]


def test_retrieval_rejects_empty_pool(make_store):
    with pytest.raises(ScoringError, match="pool is empty"):
        retrieve_topk(make_store(), EmbeddingStore(dim=16), k=3)
