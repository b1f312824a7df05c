"""Waveform containers, short-utterance concatenation and online augmentation."""
import itertools
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import soundfile
from attrs import define, evolve, field, validators
from scipy import signal

from .constants import (
    DEFAULT_AUG_PROBABILITY,
    DEFAULT_SAMPLE_RATE,
    MIN_CONCAT_SECONDS,
    SPEED_RATIOS,
)
from .errors import AudioError

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


log = logging.getLogger(__name__)

# tolerance for amplitudes produced by float arithmetic on full-scale input
PEAK_TOLERANCE = 1e-9


def _as_samples(value) -> np.ndarray:
    return np.ascontiguousarray(value, dtype=np.float64).reshape(-1)


def _check_amplitude(instance, attribute, value) -> None:
    if value.size and np.max(np.abs(value)) > 1.0 + PEAK_TOLERANCE:
        raise AudioError(
            "{!r} has samples outside [-1, 1] (peak {!r})".format(
                instance.utterance_id, float(np.max(np.abs(value)))
            )
        )


def _positive(instance, attribute, value) -> None:
    if value <= 0:
        raise AudioError("{} must be positive, got {!r}".format(attribute.name, value))


@define(frozen=True, slots=True, eq=False)
class AudioBuffer:
    """Mono waveform with the ids that drive grouping and labelling."""

    samples: np.ndarray = field(converter=_as_samples, validator=_check_amplitude)
    sample_rate: int = field(default=DEFAULT_SAMPLE_RATE, validator=_positive)
    utterance_id: str = field(default="")
    speaker_id: str = field(default="")
    genre: str = field(default="")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_seconds(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "AudioBuffer":
        return evolve(self, samples=samples)


def _check_probability(instance, attribute, value) -> None:
    if not 0.0 <= value <= 1.0:
        raise AudioError("apply_probability must lie in [0, 1], got {!r}".format(value))


def _check_ratios(instance, attribute, value) -> None:
    if 1.0 not in value:
        raise AudioError("speed_ratios must contain 1.0, got {!r}".format(value))
    if any(ratio <= 0 for ratio in value):
        raise AudioError("speed ratios must be positive, got {!r}".format(value))


@define(frozen=True, slots=True)
class AugmentConfig:
    apply_probability: float = field(
        default=DEFAULT_AUG_PROBABILITY, converter=float, validator=_check_probability
    )
    snr_db_range: Tuple[float, float] = field(
        default=(0.0, 20.0), converter=tuple, validator=validators.instance_of(tuple)
    )
    speed_ratios: frozenset = field(
        default=frozenset(SPEED_RATIOS), converter=frozenset, validator=_check_ratios
    )
    rng_seed: int = field(default=0)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


def read_wav(
    path: str, sample_rate: int = DEFAULT_SAMPLE_RATE, **ids: str
) -> AudioBuffer:
    """
    Read a PCM WAV file as a mono AudioBuffer at the working sample rate.

    :param ids: utterance_id, speaker_id and genre forwarded to the buffer
    """
    samples, file_rate = soundfile.read(path, dtype="float64", always_2d=True)
    samples = samples.mean(axis=1)
    if file_rate != sample_rate:
        gcd = np.gcd(int(file_rate), int(sample_rate))
        log.debug("Resample %r from %d Hz to %d Hz", path, file_rate, sample_rate)
        samples = signal.resample_poly(samples, sample_rate // gcd, file_rate // gcd)
        samples = np.clip(samples, -1.0, 1.0)
    return AudioBuffer(samples=samples, sample_rate=sample_rate, **ids)


def write_wav(path: str, audio: AudioBuffer) -> None:
    soundfile.write(path, audio.samples, audio.sample_rate, subtype="PCM_16")


def concat_short_utterances(
    utts: Sequence[AudioBuffer], min_duration: float = MIN_CONCAT_SECONDS
) -> List[AudioBuffer]:
    """
    Merge short utterances of one speaker and genre until each is min_duration long.

    Groups are visited in (speaker_id, genre) order and utterances in
    lexicographic utterance_id order. Utterances that are already long enough
    pass through unchanged; a short tail left when a group runs out is kept
    as-is, so the total sample count is conserved.
    """
    if not utts:
        return []
    rates = {u.sample_rate for u in utts}
    if len(rates) > 1:
        raise AudioError(
            "cannot concatenate utterances with mixed sample rates {!r}".format(
                sorted(rates)
            )
        )

    def group_key(utt: AudioBuffer) -> Tuple[str, str]:
        return utt.speaker_id, utt.genre

    merged: List[AudioBuffer] = []
    ordered = sorted(utts, key=lambda u: (group_key(u), u.utterance_id))
    for (speaker_id, genre), group in itertools.groupby(ordered, key=group_key):
        pending: List[AudioBuffer] = []
        for utt in group:
            if utt.duration_seconds >= min_duration:
                merged.append(utt)
                continue
            pending.append(utt)
            if sum(len(p) for p in pending) / utt.sample_rate >= min_duration:
                merged.append(_join(pending, speaker_id, genre))
                pending = []
        if pending:
            merged.append(_join(pending, speaker_id, genre))
    log.debug("Concatenated %d utterances into %d", len(utts), len(merged))
    return merged


def _join(parts: Sequence[AudioBuffer], speaker_id: str, genre: str) -> AudioBuffer:
    if len(parts) == 1:
        return parts[0]
    return AudioBuffer(
        samples=np.concatenate([p.samples for p in parts]),
        sample_rate=parts[0].sample_rate,
        utterance_id="+".join(p.utterance_id for p in parts),
        speaker_id=speaker_id,
        genre=genre,
    )


def concatenate(parts: Sequence[AudioBuffer], utterance_id: str = "") -> AudioBuffer:
    """Join buffers end to end regardless of duration (UttConcat enrollment)."""
    if not parts:
        raise AudioError("nothing to concatenate")
    if len({p.sample_rate for p in parts}) > 1:
        raise AudioError("cannot concatenate buffers with mixed sample rates")
    return AudioBuffer(
        samples=np.concatenate([p.samples for p in parts]),
        sample_rate=parts[0].sample_rate,
        utterance_id=utterance_id or "+".join(p.utterance_id for p in parts),
        speaker_id=parts[0].speaker_id,
        genre=parts[0].genre,
    )


def _power(samples: np.ndarray) -> float:
    return float(np.mean(np.square(samples)))


def fit_noise(noise: AudioBuffer, length: int) -> np.ndarray:
    """Tile or crop noise samples to exactly length samples."""
    return np.resize(noise.samples, length)


def noise_gain(clean: AudioBuffer, noise: AudioBuffer, snr_db: float) -> float:
    """Gain g such that clean-to-(g * noise) power ratio equals snr_db."""
    clean_power = _power(clean.samples)
    if clean_power == 0.0:
        raise AudioError("{!r} is silent, SNR is undefined".format(clean.utterance_id))
    noise_power = _power(fit_noise(noise, len(clean)))
    if noise_power == 0.0:
        raise AudioError("noise {!r} is silent".format(noise.utterance_id))
    return float(np.sqrt(clean_power / (noise_power * 10.0 ** (snr_db / 10.0))))


def add_noise(clean: AudioBuffer, noise: AudioBuffer, snr_db: float) -> AudioBuffer:
    """
    Mix noise into clean speech at the requested SNR.

    Noise is tiled or cropped to the clean length. When the mixture clips,
    speech and noise are scaled down together, which leaves the SNR intact.
    """
    gain = noise_gain(clean, noise, snr_db)
    mixed = clean.samples + gain * fit_noise(noise, len(clean))
    return clean.with_samples(_limit_peak(mixed))


def _limit_peak(samples: np.ndarray) -> np.ndarray:
    peak = float(np.max(np.abs(samples))) if samples.size else 0.0
    if peak > 1.0:
        log.debug("Peak %.4f exceeds full scale, rescaling", peak)
        return samples / peak
    return samples


def reverberate(dry: AudioBuffer, rir: Sequence[float]) -> AudioBuffer:
    """Convolve with an impulse response, keeping the dry length."""
    response = np.asarray(rir, dtype=np.float64).reshape(-1)
    if response.size == 0:
        raise AudioError("impulse response is empty")
    if not np.any(response):
        raise AudioError("impulse response is all zeros")
    wet = signal.convolve(dry.samples, response, mode="full")[: len(dry)]
    return dry.with_samples(_limit_peak(wet))


def speed_perturb(audio: AudioBuffer, ratio: float) -> AudioBuffer:
    """
    Change playback speed by ratio using linear-interpolation resampling.

    The sample rate is kept, so the output has round(len / ratio) samples.
    """
    if ratio <= 0:
        raise AudioError("speed ratio must be positive, got {!r}".format(ratio))
    if ratio == 1.0:
        return audio
    n_out = max(1, int(np.floor(len(audio) / ratio + 0.5)))
    positions = np.minimum(np.arange(n_out) * ratio, len(audio) - 1)
    resampled = np.interp(positions, np.arange(len(audio)), audio.samples)
    return audio.with_samples(resampled)


def augment_online(
    audio: AudioBuffer,
    cfg: AugmentConfig,
    noise_pool: Iterable[AudioBuffer] = (),
    rir_pool: Iterable[Sequence[float]] = (),
    rng: Optional[np.random.Generator] = None,
) -> Tuple[AudioBuffer, float]:
    """
    Apply noise, reverberation and speed perturbation, each with cfg.apply_probability.

    The three decisions are drawn up front so the firing pattern only depends
    on the generator state. An empty pool skips its augmentation.

    :return: augmented audio and the speed ratio applied (1.0 when speed
        perturbation did not fire)
    """
    if rng is None:
        rng = cfg.rng()
    noise_pool = list(noise_pool)
    rir_pool = list(rir_pool)
    fire_noise, fire_reverb, fire_speed = rng.random(3) < cfg.apply_probability
    ratio = 1.0

    if fire_noise and noise_pool:
        noise = noise_pool[int(rng.integers(len(noise_pool)))]
        snr_db = float(rng.uniform(*cfg.snr_db_range))
        log.debug("Add noise %r at %.2f dB", noise.utterance_id, snr_db)
        audio = add_noise(audio, noise, snr_db)
    if fire_reverb and rir_pool:
        audio = reverberate(audio, rir_pool[int(rng.integers(len(rir_pool)))])
    choices = sorted(cfg.speed_ratios - {1.0})
    if fire_speed and choices:
        ratio = float(choices[int(rng.integers(len(choices)))])
        log.debug("Speed perturb %r by %r", audio.utterance_id, ratio)
        audio = speed_perturb(audio, ratio)
    return audio, ratio
