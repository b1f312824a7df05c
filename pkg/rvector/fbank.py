"""80-dimensional log mel filterbank features with utterance-wise mean normalization."""
from functools import lru_cache
import logging
import struct

import librosa
import numpy as np
from attrs import define, field
from scipy import signal

from .audio import AudioBuffer
from .constants import (
    FEATURE_MAGIC,
    FRAME_LENGTH_SECONDS,
    FRAME_SHIFT_SECONDS,
    LOG_FLOOR,
    N_MELS,
)
from .errors import BadMagicError, FeatureError, TruncatedPayloadError

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


log = logging.getLogger(__name__)

# the complete front end, in order; there is intentionally no VAD stage
FRONTEND_STAGES = ("frame", "window", "stft", "mel", "log", "cmn")

_HEADER = struct.Struct("<4sII")


def _as_matrix(value) -> np.ndarray:
    matrix = np.asarray(value, dtype=np.float64)
    if matrix.ndim != 2:
        raise FeatureError("expecting a 2-D feature matrix, got shape {!r}".format(
            matrix.shape
        ))
    return matrix


@define(frozen=True, slots=True, eq=False)
class FeatureMatrix:
    """Frames x mel-dimension matrix, one row per frame."""

    frames: np.ndarray = field(converter=_as_matrix)
    frame_shift_seconds: float = field(default=FRAME_SHIFT_SECONDS)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])

    @classmethod
    def from_bytes(cls, raw: bytes) -> "FeatureMatrix":
        if len(raw) < _HEADER.size:
            raise TruncatedPayloadError("feature dump shorter than its header")
        magic, n_frames, dim = _HEADER.unpack_from(raw)
        if magic != FEATURE_MAGIC:
            raise BadMagicError(FEATURE_MAGIC, magic)
        payload = raw[_HEADER.size :]
        expected = n_frames * dim * 4
        if len(payload) < expected:
            raise TruncatedPayloadError(
                "feature dump holds {} of {} payload bytes".format(len(payload), expected)
            )
        frames = np.frombuffer(payload[:expected], dtype="<f4").reshape(n_frames, dim)
        return cls(frames=frames)

    def __bytes__(self) -> bytes:
        header = _HEADER.pack(FEATURE_MAGIC, self.num_frames, self.dim)
        return header + np.ascontiguousarray(self.frames, dtype="<f4").tobytes()


def num_frames(n_samples: int, win: int, hop: int) -> int:
    return 1 + (n_samples - win) // hop


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """HTK-scale triangles from 0 Hz to Nyquist, shape (n_mels, n_fft // 2 + 1)."""
    return librosa.filters.mel(
        sr=sample_rate,
        n_fft=n_fft,
        n_mels=n_mels,
        fmin=0.0,
        fmax=sample_rate / 2.0,
        htk=True,
        norm=None,
    )


def cmn(features) -> FeatureMatrix:
    """Subtract the per-dimension mean over this utterance's frames."""
    if isinstance(features, FeatureMatrix):
        frames, shift = features.frames, features.frame_shift_seconds
    else:
        frames, shift = _as_matrix(features), FRAME_SHIFT_SECONDS
    if frames.shape[0] < 1:
        raise FeatureError("cannot normalize an empty feature matrix")
    return FeatureMatrix(frames=frames - frames.mean(axis=0), frame_shift_seconds=shift)


def compute_fbank(
    audio: AudioBuffer,
    n_mels: int = N_MELS,
    frame_length: float = FRAME_LENGTH_SECONDS,
    frame_shift: float = FRAME_SHIFT_SECONDS,
) -> FeatureMatrix:
    """
    Extract CMN-normalized log mel filterbank energies.

    Frames are Hann-windowed, zero-padded to the next power of two and
    transformed to STFT magnitudes before the mel projection and a floored
    natural log.
    """
    win = int(round(frame_length * audio.sample_rate))
    hop = int(round(frame_shift * audio.sample_rate))
    if len(audio) < win:
        raise FeatureError(
            "{!r} has {} samples, shorter than one {} sample frame".format(
                audio.utterance_id, len(audio), win
            )
        )
    n_fft = 1 << (win - 1).bit_length()
    frames = np.lib.stride_tricks.sliding_window_view(audio.samples, win)[::hop]
    window = signal.get_window("hann", win)
    magnitude = np.abs(np.fft.rfft(frames * window, n=n_fft, axis=1))
    mel = magnitude @ mel_filterbank(audio.sample_rate, n_fft, n_mels).T
    log_mel = np.log(np.maximum(mel, LOG_FLOOR))
    log.debug(
        "fbank %r: %d frames x %d mels", audio.utterance_id, log_mel.shape[0], n_mels
    )
    return cmn(FeatureMatrix(frames=log_mel, frame_shift_seconds=frame_shift))
