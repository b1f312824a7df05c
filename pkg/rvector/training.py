"""Two-stage AAM training of the classifier head over fixed embeddings."""
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from attrs import define, evolve, field

from .aam import (
    AamConfig,
    ClassifierHead,
    aam_grad_batch,
    expand_speed_label,
    expanded_class_count,
)
from .constants import FRAME_SHIFT_SECONDS, SPEED_PREFIX_FORMAT, SPEED_RATIOS
from .errors import TrainingError
from .fbank import FeatureMatrix

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


log = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 128
DEFAULT_MOMENTUM = 0.9
DEFAULT_WEIGHT_DECAY = 1e-4
STAGE_ONE_MARGIN = 0.2
STAGE_TWO_MARGIN = 0.5
AAM_SCALE = 32.0


def _check_epochs(instance, attribute, value) -> None:
    if value < 0:
        raise TrainingError("epochs must be >= 0, got {!r}".format(value))


def _check_lr(instance, attribute, value) -> None:
    if not instance.lr_init >= value > 0:
        raise TrainingError(
            "expecting lr_init >= lr_final > 0, got {!r} -> {!r}".format(
                instance.lr_init, value
            )
        )


@define(frozen=True, slots=True)
class StagePlan:
    epochs: int = field(converter=int, validator=_check_epochs)
    segment_seconds: float = field(converter=float)
    lr_init: float = field(converter=float)
    lr_final: float = field(converter=float, validator=_check_lr)
    speed_perturb_enabled: bool = field(default=False)

    def scaled(self, epochs: int) -> "StagePlan":
        """Same schedule endpoints compressed into fewer epochs."""
        return evolve(self, epochs=epochs)

    def segment_frames(self, frame_shift: float = FRAME_SHIFT_SECONDS) -> int:
        return int(round(self.segment_seconds / frame_shift))


def stage_one_plan(speed_perturb: bool = True) -> StagePlan:
    return StagePlan(
        epochs=165,
        segment_seconds=2.0,
        lr_init=0.1,
        lr_final=0.00005,
        speed_perturb_enabled=speed_perturb,
    )


def stage_two_plan() -> StagePlan:
    return StagePlan(
        epochs=5,
        segment_seconds=6.0,
        lr_init=0.0001,
        lr_final=0.000025,
        speed_perturb_enabled=False,
    )


def lr_at(epoch: float, plan: StagePlan) -> float:
    """Exponential decay from lr_init at epoch 0 to lr_final at plan.epochs."""
    if plan.epochs == 0 or epoch <= 0:
        return plan.lr_init
    if epoch >= plan.epochs:
        return plan.lr_final
    return plan.lr_init * (plan.lr_final / plan.lr_init) ** (epoch / plan.epochs)


def sample_segment(
    features: Union[FeatureMatrix, np.ndarray],
    seconds: float,
    frame_shift: float = FRAME_SHIFT_SECONDS,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Random contiguous segment of round(seconds / frame_shift) frames.

    Utterances shorter than the segment are tiled cyclically first.
    """
    if isinstance(features, FeatureMatrix):
        frames = features.frames
    else:
        frames = np.asarray(features)
    if frames.shape[0] == 0:
        raise TrainingError("cannot sample a segment from an utterance with no frames")
    if rng is None:
        rng = np.random.default_rng()
    length = int(round(seconds / frame_shift))
    if frames.shape[0] < length:
        log.warning("Tile %d frames to fill a %d frame segment", frames.shape[0], length)
        reps = -(-length // frames.shape[0])
        frames = np.tile(frames, (reps, 1))
    start = int(rng.integers(frames.shape[0] - length + 1))
    return frames[start : start + length]


@define(slots=True)
class MomentumSgd:
    """SGD with momentum and L2 weight decay; one instance per parameter."""

    momentum: float = field(default=DEFAULT_MOMENTUM)
    weight_decay: float = field(default=DEFAULT_WEIGHT_DECAY)
    velocity: Optional[np.ndarray] = field(default=None)

    def step(self, param: np.ndarray, grad: np.ndarray, lr: float) -> None:
        grad = grad + self.weight_decay * param
        if self.velocity is None:
            self.velocity = np.zeros_like(param)
        self.velocity *= self.momentum
        self.velocity += grad
        param -= lr * self.velocity


@define(frozen=True, slots=True)
class EpochRecord:
    epoch: int
    lr: float
    mean_loss: float

    def __str__(self) -> str:
        return "{}\t{!r}\t{!r}".format(self.epoch, self.lr, self.mean_loss)


@define(frozen=True, slots=True)
class TrainResult:
    head: ClassifierHead
    trace: Tuple[EpochRecord, ...]


def format_loss_trace(trace: Sequence[EpochRecord]) -> str:
    return "".join("{}\n".format(record) for record in trace)


def _check_dataset(labels: np.ndarray, cfg: AamConfig) -> None:
    if cfg.num_classes < 2:
        raise TrainingError("need at least 2 classes, got {}".format(cfg.num_classes))
    if labels.size and (labels.min() < 0 or labels.max() >= cfg.num_classes):
        raise TrainingError(
            "class index out of range [0, {}): min {}, max {}".format(
                cfg.num_classes, labels.min(), labels.max()
            )
        )
    empty = np.flatnonzero(np.bincount(labels, minlength=cfg.num_classes) == 0)
    if empty.size:
        raise TrainingError(
            "{} class(es) have no examples, first {!r}".format(empty.size, empty[:5])
        )


def train_head(
    embeddings: np.ndarray,
    labels: Sequence[int],
    plan: StagePlan,
    cfg: AamConfig,
    seed: int = 0,
    head: Optional[ClassifierHead] = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> TrainResult:
    """
    Mini-batch SGD on the AAM loss, learning rate from lr_at per epoch.

    :return: the trained head and the per-epoch mean loss trace
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_dataset(labels, cfg)
    rng = np.random.default_rng(seed)
    if head is None:
        head = ClassifierHead.random(cfg.num_classes, embeddings.shape[1], rng)
    elif head.num_classes != cfg.num_classes:
        raise TrainingError(
            "head has {} rows, config expects {} classes".format(
                head.num_classes, cfg.num_classes
            )
        )
    if plan.epochs == 0:
        return TrainResult(head=head, trace=())

    weight = head.weight.copy()
    optimizer = MomentumSgd()
    trace = []
    for epoch in range(plan.epochs):
        lr = lr_at(epoch, plan)
        order = rng.permutation(labels.size)
        total = 0.0
        for start in range(0, order.size, batch_size):
            batch = order[start : start + batch_size]
            loss, _, grad_w = aam_grad_batch(
                embeddings[batch], ClassifierHead(weight), labels[batch], cfg
            )
            optimizer.step(weight, grad_w / batch.size, lr)
            total += loss
        record = EpochRecord(epoch=epoch, lr=lr, mean_loss=total / labels.size)
        log.debug("epoch %d lr %.3g loss %.5f", epoch, lr, record.mean_loss)
        trace.append(record)
    return TrainResult(head=ClassifierHead(weight), trace=tuple(trace))


@define(frozen=True, slots=True)
class TwoStageResult:
    stage_one: TrainResult
    stage_two: TrainResult

    @property
    def head(self) -> ClassifierHead:
        return self.stage_two.head

    @property
    def trace(self) -> Tuple[EpochRecord, ...]:
        """Both traces, stage II epochs numbered on from the end of stage I."""
        offset = len(self.stage_one.trace)
        return self.stage_one.trace + tuple(
            evolve(record, epoch=record.epoch + offset) for record in self.stage_two.trace
        )


def train_two_stage(
    embeddings: np.ndarray,
    labels: Sequence[int],
    base_speakers: int,
    stage_one: StagePlan,
    stage_two: StagePlan,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> TwoStageResult:
    """
    Classification training then large-margin finetuning.

    labels index the speed-expanded class space. Stage I trains on every
    example over 3 * base_speakers classes (only the ratio-1.0 examples
    over base_speakers classes when speed perturbation is disabled). Stage
    II keeps the ratio-1.0 rows of the head and examples, margin 0.5.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    base = labels < base_speakers

    if stage_one.speed_perturb_enabled:
        first_cfg = AamConfig(
            expanded_class_count(base_speakers), AAM_SCALE, STAGE_ONE_MARGIN
        )
        first = train_head(
            embeddings, labels, stage_one, first_cfg, seed, None, batch_size
        )
    else:
        first_cfg = AamConfig(base_speakers, AAM_SCALE, STAGE_ONE_MARGIN)
        first = train_head(
            embeddings[base], labels[base], stage_one, first_cfg, seed, None, batch_size
        )
    log.info(
        "Stage II: collapse %d classes to %d", first.head.num_classes, base_speakers
    )
    second_cfg = AamConfig(base_speakers, AAM_SCALE, STAGE_TWO_MARGIN)
    second = train_head(
        embeddings[base],
        labels[base],
        stage_two,
        second_cfg,
        seed + 1,
        first.head.restrict(base_speakers),
        batch_size,
    )
    return TwoStageResult(stage_one=first, stage_two=second)


def split_speed_prefix(speaker_id: str) -> Tuple[str, float]:
    """'sp0.9-spk1' -> ('spk1', 0.9); ids without a prefix have ratio 1.0."""
    for ratio in SPEED_RATIOS:
        prefix = SPEED_PREFIX_FORMAT.format(ratio)
        if ratio != 1.0 and speaker_id.startswith(prefix):
            return speaker_id[len(prefix) :], ratio
    return speaker_id, 1.0


def speaker_labels(speaker_ids: Sequence[str]) -> Tuple[np.ndarray, List[str]]:
    """
    Expanded class labels for speaker ids that may carry speed prefixes.

    :return: labels and the sorted base speaker ids (index = base class)
    """
    parsed = [split_speed_prefix(s) for s in speaker_ids]
    base_ids = sorted({base for base, _ in parsed})
    index: Dict[str, int] = {speaker: i for i, speaker in enumerate(base_ids)}
    labels = np.array(
        [expand_speed_label(index[base], ratio, len(base_ids)) for base, ratio in parsed],
        dtype=np.int64,
    )
    return labels, base_ids
