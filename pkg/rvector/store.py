"""Embedding stores, trial and enrollment lists, score files and atomic writes."""
import logging
import os
import struct
import tempfile
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from attrs import define, field

from .constants import STORE_MAGIC, TrialLabel, trial_label_aliases
from .errors import (
    BadMagicError,
    DimensionMismatchError,
    FormatError,
    MissingIdsError,
    TrialFileError,
)
from .scoring import ScoreSet
from .tensorio import ByteReader, pack_text

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


log = logging.getLogger(__name__)

_COUNTS = struct.Struct("<II")
_ID_LENGTH = struct.Struct("<H")

Record = Tuple[str, np.ndarray]


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write to a temporary sibling file, then rename over path."""
    directory = os.path.dirname(os.path.abspath(path))
    handle = tempfile.NamedTemporaryFile(
        dir=directory, prefix=".{}.".format(os.path.basename(path)), delete=False
    )
    try:
        with handle:
            handle.write(data)
        os.replace(handle.name, path)
    except BaseException:
        os.unlink(handle.name)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _read_text(path: str) -> List[str]:
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read().splitlines()


def _as_records(value: Mapping[str, Record]) -> Dict[str, Record]:
    return {
        str(utt): (str(spk), np.asarray(vector, dtype="<f4").reshape(-1))
        for utt, (spk, vector) in value.items()
    }


@define(frozen=True, slots=True, eq=False)
class EmbeddingStore:
    """Utterance id -> (speaker id, float32 vector) of one shared dimension."""

    dim: int = field(converter=int)
    records: Dict[str, Record] = field(factory=dict, converter=_as_records)

    def __attrs_post_init__(self) -> None:
        for utt, (_, vector) in self.records.items():
            if vector.size != self.dim:
                raise DimensionMismatchError(
                    "{!r} has dimension {}, store dimension is {}".format(
                        utt, vector.size, self.dim
                    )
                )

    @classmethod
    def from_embeddings(
        cls, embeddings: Iterable, dim: Optional[int] = None
    ) -> "EmbeddingStore":
        records = {}
        for emb in embeddings:
            if emb.utterance_id in records:
                raise FormatError("duplicate utterance id {!r}".format(emb.utterance_id))
            records[emb.utterance_id] = (emb.speaker_id, emb.vector)
        if dim is None:
            dim = next(iter(records.values()))[1].size if records else 0
        return cls(dim=dim, records=records)

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, utterance_id: str) -> bool:
        return utterance_id in self.records

    def __iter__(self) -> Iterator[str]:
        return iter(self.records)

    def speaker(self, utterance_id: str) -> str:
        return self.records[utterance_id][0]

    def vector(self, utterance_id: str) -> np.ndarray:
        return self.records[utterance_id][1]

    def matrix(self, utterance_ids: Sequence[str]) -> np.ndarray:
        missing = [u for u in utterance_ids if u not in self.records]
        if missing:
            raise MissingIdsError(missing)
        if not utterance_ids:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self.records[u][1] for u in utterance_ids])

    @classmethod
    def from_bytes(
        cls, raw: bytes, expected_dim: Optional[int] = None
    ) -> "EmbeddingStore":
        reader = ByteReader(raw)
        magic = reader.take(len(STORE_MAGIC), "magic")
        if magic != STORE_MAGIC:
            raise BadMagicError(STORE_MAGIC, magic)
        dim, count = reader.unpack(_COUNTS, "header")
        if expected_dim is not None and dim != expected_dim:
            raise DimensionMismatchError(
                "store dimension {} does not match expected {}".format(dim, expected_dim)
            )
        records = {}
        for index in range(count):
            utt = _take_id(reader, "utterance id of record {}".format(index))
            spk = _take_id(reader, "speaker id of record {}".format(index))
            payload = reader.take(4 * dim, "vector of {!r}".format(utt))
            vector = np.frombuffer(payload, "<f4")
            if utt in records:
                raise FormatError("duplicate utterance id {!r}".format(utt))
            records[utt] = (spk, vector)
        if reader.offset != len(raw):
            raise FormatError(
                "{} trailing bytes after the last record".format(len(raw) - reader.offset)
            )
        return cls(dim=dim, records=records)

    def __bytes__(self) -> bytes:
        chunks = [STORE_MAGIC, _COUNTS.pack(self.dim, len(self.records))]
        for utt, (spk, vector) in self.records.items():
            chunks.append(pack_text(utt, "utterance id {!r}".format(utt[:32])))
            chunks.append(pack_text(spk, "speaker id of {!r}".format(utt[:32])))
            chunks.append(vector.tobytes())
        return b"".join(chunks)


def _take_id(reader: ByteReader, what: str) -> str:
    (length,) = reader.unpack(_ID_LENGTH, what)
    return reader.take(length, what).decode("utf-8")


def read_store(path: str, expected_dim: Optional[int] = None) -> EmbeddingStore:
    with open(path, "rb") as handle:
        return EmbeddingStore.from_bytes(handle.read(), expected_dim)


def write_store(path: str, store: EmbeddingStore) -> None:
    if not len(store):
        raise FormatError("refusing to write an empty embedding store")
    atomic_write_bytes(path, bytes(store))


@define(frozen=True, slots=True)
class TrialPair:
    enroll_speaker: str
    test_utterance: str
    label: Optional[TrialLabel] = field(default=None)

    def __attrs_post_init__(self) -> None:
        if not self.enroll_speaker or not self.test_utterance:
            raise FormatError("trial ids must be non-empty")

    @property
    def key(self) -> Tuple[str, str]:
        return self.enroll_speaker, self.test_utterance


@define(frozen=True, slots=True)
class TrialSet:
    trials: Tuple[TrialPair, ...] = field(converter=tuple)
    enrollment: Dict[str, Tuple[str, ...]] = field(factory=dict)

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def keys(self) -> Tuple[Tuple[str, str], ...]:
        return tuple(t.key for t in self.trials)

    @property
    def has_labels(self) -> bool:
        return bool(self.trials) and all(t.label is not None for t in self.trials)

    def labels(self) -> np.ndarray:
        if not self.has_labels:
            raise FormatError("trial list carries no (or partial) target labels")
        return np.array([t.label is TrialLabel.Target for t in self.trials])

    def with_enrollment(self, enrollment: Mapping[str, Sequence[str]]) -> "TrialSet":
        return TrialSet(self.trials, {k: tuple(v) for k, v in enrollment.items()})

    def enrollment_of(self, enroll_speaker: str) -> Tuple[str, ...]:
        """Enrollment utterances; a speaker without a list enrolls with its own id."""
        return self.enrollment.get(enroll_speaker, (enroll_speaker,))


def parse_trials(path: str) -> TrialSet:
    """
    Parse "enroll_speaker test_utterance [label]" lines in file order.

    Labels are target/nontarget or 1/0; blank lines are skipped.
    """
    trials: List[TrialPair] = []
    seen = set()
    for number, line in enumerate(_read_text(path), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) not in (2, 3):
            raise TrialFileError(
                path, number, "expecting 2 or 3 fields, got {}".format(len(tokens))
            )
        label = None
        if len(tokens) == 3:
            try:
                label = trial_label_aliases[tokens[2].lower()]
            except KeyError:
                raise TrialFileError(
                    path, number, "unknown label {!r}".format(tokens[2])
                ) from None
        pair = TrialPair(tokens[0], tokens[1], label)
        if pair.key in seen:
            raise TrialFileError(path, number, "duplicate trial {!r}".format(pair.key))
        seen.add(pair.key)
        trials.append(pair)
    return TrialSet(trials)


def parse_enrollment(path: str) -> Dict[str, Tuple[str, ...]]:
    """Parse "enroll_speaker utterance_id" lines into speaker -> utterances."""
    enrollment: Dict[str, List[str]] = {}
    for number, line in enumerate(_read_text(path), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 2:
            raise TrialFileError(
                path, number, "expecting 2 fields, got {}".format(len(tokens))
            )
        enrollment.setdefault(tokens[0], []).append(tokens[1])
    return {speaker: tuple(utts) for speaker, utts in enrollment.items()}


def format_enrollment(enrollment: Mapping[str, Sequence[str]]) -> str:
    return "".join(
        "{} {}\n".format(speaker, utt)
        for speaker, utts in enrollment.items()
        for utt in utts
    )


def format_trials(trials: TrialSet) -> str:
    lines = []
    for trial in trials.trials:
        fields = [trial.enroll_speaker, trial.test_utterance]
        if trial.label is not None:
            fields.append(trial.label.value)
        lines.append(" ".join(fields) + "\n")
    return "".join(lines)


def write_scores(path: str, score_set: ScoreSet) -> None:
    atomic_write_text(
        path,
        "".join(
            "{} {} {!r}\n".format(e, t, float(s))
            for (e, t), s in zip(score_set.keys, score_set.scores)
        ),
    )


def read_scores(path: str, system: str = "") -> ScoreSet:
    keys, scores = [], []
    for number, line in enumerate(_read_text(path), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 3:
            raise TrialFileError(
                path, number, "expecting 3 fields, got {}".format(len(tokens))
            )
        try:
            scores.append(float(tokens[2]))
        except ValueError:
            raise TrialFileError(
                path, number, "score {!r} is not a number".format(tokens[2])
            ) from None
        keys.append((tokens[0], tokens[1]))
    return ScoreSet(keys=keys, scores=scores, system=system or os.path.basename(path))


@define(frozen=True, slots=True)
class WavEntry:
    utterance_id: str
    speaker_id: str
    path: str
    genre: str = field(default="")


def parse_wav_list(path: str) -> List[WavEntry]:
    """
    Parse "utterance_id speaker_id wav_path [genre]" lines.

    Relative wav paths resolve against the list file's directory.
    """
    base = os.path.dirname(os.path.abspath(path))
    entries: List[WavEntry] = []
    seen = set()
    for number, line in enumerate(_read_text(path), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) not in (3, 4):
            raise TrialFileError(
                path, number, "expecting 3 or 4 fields, got {}".format(len(tokens))
            )
        if tokens[0] in seen:
            raise TrialFileError(
                path, number, "duplicate utterance {!r}".format(tokens[0])
            )
        seen.add(tokens[0])
        entries.append(
            WavEntry(tokens[0], tokens[1], os.path.join(base, tokens[2]), *tokens[3:])
        )
    return entries


def _utterance_token(token: str) -> str:
    """'test/id00800-singing-01-001.wav' -> 'id00800-singing-01-001'."""
    return os.path.splitext(os.path.basename(token))[0]


def read_cnceleb_lists(lists_dir: str) -> TrialSet:
    """
    Best-effort reader for a CN-Celeb style ``eval/lists`` directory.

    trials.lst holds "enroll_id test_path label" lines. Enrollment comes
    from enroll.map ("enroll_id utt utt ...") when present, else from
    enroll.lst ("enroll_id path"). Paths are reduced to their stem.
    """
    trials_path = os.path.join(lists_dir, "trials.lst")
    trials = []
    for number, line in enumerate(_read_text(trials_path), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 3:
            raise TrialFileError(
                trials_path, number, "expecting 3 fields, got {}".format(len(tokens))
            )
        try:
            label = trial_label_aliases[tokens[2].lower()]
        except KeyError:
            raise TrialFileError(
                trials_path, number, "unknown label {!r}".format(tokens[2])
            ) from None
        trials.append(TrialPair(tokens[0], _utterance_token(tokens[1]), label))

    enrollment: Dict[str, Tuple[str, ...]] = {}
    map_path = os.path.join(lists_dir, "enroll.map")
    lst_path = os.path.join(lists_dir, "enroll.lst")
    source = map_path if os.path.exists(map_path) else lst_path
    if os.path.exists(source):
        for number, line in enumerate(_read_text(source), start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) < 2:
                raise TrialFileError(source, number, "enrollment without utterances")
            enrollment[tokens[0]] = tuple(_utterance_token(t) for t in tokens[1:])
    else:
        log.warning(
            "No enroll.map or enroll.lst in %r, speakers enroll with their own id",
            lists_dir,
        )
    return TrialSet(trials, enrollment)
