"""Additive angular margin softmax with analytic gradients."""
import math
from typing import Tuple

import numpy as np
from attrs import define, field
from scipy.special import logsumexp, softmax

from .constants import SPEED_LABEL_OFFSETS
from .errors import TrainingError
from .tensorio import HEAD_SPEC_CODE, TensorBundle

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


# guards the derivative of sin(theta) where the target angle is 0 or pi
SINE_FLOOR = 1e-12


def _check_scale(instance, attribute, value) -> None:
    if value <= 0:
        raise TrainingError("AAM scale must be positive, got {!r}".format(value))


def _check_margin(instance, attribute, value) -> None:
    if not 0.0 <= value < math.pi / 2:
        raise TrainingError("AAM margin must lie in [0, pi/2), got {!r}".format(value))


@define(frozen=True, slots=True)
class AamConfig:
    num_classes: int = field(converter=int)
    scale: float = field(default=32.0, converter=float, validator=_check_scale)
    margin: float = field(default=0.2, converter=float, validator=_check_margin)


def _normalize_rows(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise TrainingError("cannot normalize a zero vector")
    return matrix / norms, norms


@define(frozen=True, slots=True, eq=False)
class ClassifierHead:
    """Class-direction matrix; rows are L2-normalized whenever the head is used."""

    weight: np.ndarray = field(converter=lambda w: np.array(w, dtype=np.float64, ndmin=2))

    @property
    def num_classes(self) -> int:
        return int(self.weight.shape[0])

    @property
    def dim(self) -> int:
        return int(self.weight.shape[1])

    def normalized(self) -> np.ndarray:
        return _normalize_rows(self.weight)[0]

    def restrict(self, num_classes: int) -> "ClassifierHead":
        """Keep the first num_classes rows (the ratio-1.0 speakers)."""
        return ClassifierHead(self.weight[:num_classes].copy())

    def predict(self, embeddings: np.ndarray) -> np.ndarray:
        """Index of the nearest row by cosine for each embedding."""
        x_hat, _ = _normalize_rows(np.atleast_2d(embeddings))
        return np.argmax(x_hat @ self.normalized().T, axis=1)

    def to_bundle(self) -> TensorBundle:
        tensors = {"head.weight": self.weight}
        return TensorBundle(spec_code=HEAD_SPEC_CODE, tensors=tensors)

    @classmethod
    def from_bundle(cls, bundle: TensorBundle) -> "ClassifierHead":
        if bundle.spec_code != HEAD_SPEC_CODE or "head.weight" not in bundle.tensors:
            raise TrainingError("checkpoint does not hold a classifier head")
        return cls(bundle.tensors["head.weight"])

    @classmethod
    def random(
        cls, num_classes: int, dim: int, rng: np.random.Generator
    ) -> "ClassifierHead":
        """Xavier-uniform rows."""
        bound = math.sqrt(6.0 / (num_classes + dim))
        return cls(rng.uniform(-bound, bound, size=(num_classes, dim)))


def expand_speed_label(speaker_index: int, ratio: float, base_speakers: int) -> int:
    """
    Class index of a speed-perturbed copy of a speaker.

    Ratio 1.0 keeps the index, 0.9 adds base_speakers and 1.1 adds twice
    base_speakers, for 3 * base_speakers classes in total.
    """
    if not 0 <= speaker_index < base_speakers:
        raise TrainingError(
            "speaker index {!r} outside [0, {!r})".format(speaker_index, base_speakers)
        )
    try:
        offset = SPEED_LABEL_OFFSETS[ratio]
    except KeyError:
        raise TrainingError(
            "unknown speed ratio {!r} (expecting one of {!r})".format(
                ratio, sorted(SPEED_LABEL_OFFSETS)
            )
        ) from None
    return speaker_index + offset * base_speakers


def expanded_class_count(base_speakers: int) -> int:
    return len(SPEED_LABEL_OFFSETS) * base_speakers


def _margin_terms(cos_target: np.ndarray, margin: float) -> Tuple[np.ndarray, np.ndarray]:
    """cos(theta + m) and its derivative w.r.t. cos(theta), with the easy fallback."""
    cos_m, sin_m = math.cos(margin), math.sin(margin)
    sin_target = np.sqrt(np.clip(1.0 - cos_target**2, 0.0, None))
    phi = cos_target * cos_m - sin_target * sin_m
    dphi = cos_m + sin_m * cos_target / np.maximum(sin_target, SINE_FLOOR)
    # theta + m > pi: cos(theta + m) stops decreasing, use cos(theta) - m sin(m)
    past_pi = cos_target < -cos_m
    phi = np.where(past_pi, cos_target - margin * sin_m, phi)
    dphi = np.where(past_pi, 1.0, dphi)
    return phi, dphi


def _check_labels(labels: np.ndarray, num_classes: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise TrainingError(
            "class index out of range [0, {}): {!r}".format(
                num_classes, labels[(labels < 0) | (labels >= num_classes)][:5]
            )
        )


def _forward(embeddings, weight, labels, cfg):
    x = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    _check_labels(labels, weight.shape[0])
    if np.any(np.linalg.norm(x, axis=1) == 0.0):
        raise TrainingError("AAM loss is undefined for a zero embedding")
    x_hat, x_norm = _normalize_rows(x)
    w_hat, w_norm = _normalize_rows(weight)
    cosine = x_hat @ w_hat.T
    rows = np.arange(x.shape[0])
    phi, dphi = _margin_terms(cosine[rows, labels], cfg.margin)
    logits = cfg.scale * cosine
    logits[rows, labels] = cfg.scale * phi
    return x_hat, x_norm, w_hat, w_norm, cosine, rows, labels, logits, dphi


def aam_loss_batch(
    embeddings: np.ndarray, head: ClassifierHead, labels: np.ndarray, cfg: AamConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-example losses (N,) and margin-adjusted logits (N, classes)."""
    *_, rows, labels, logits, _ = _forward(embeddings, head.weight, labels, cfg)
    losses = logsumexp(logits, axis=1) - logits[rows, labels]
    return losses, logits


def aam_loss(
    embedding: np.ndarray, head: ClassifierHead, label: int, cfg: AamConfig
) -> Tuple[float, np.ndarray]:
    losses, logits = aam_loss_batch(embedding, head, [label], cfg)
    return float(losses[0]), logits[0]


def aam_grad_batch(
    embeddings: np.ndarray,
    head: ClassifierHead,
    labels: np.ndarray,
    cfg: AamConfig,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Summed loss and its exact gradients w.r.t. the raw embeddings and head weights.

    The chain runs through the margin term and both L2 normalizations:
    for v_hat = v / |v|, dL/dv = (I - v_hat v_hat^T) dL/dv_hat / |v|.
    """
    (x_hat, x_norm, w_hat, w_norm, cosine, rows, labels, logits, dphi) = _forward(
        embeddings, head.weight, labels, cfg
    )
    loss = float(np.sum(logsumexp(logits, axis=1) - logits[rows, labels]))
    dlogits = softmax(logits, axis=1)
    dlogits[rows, labels] -= 1.0
    dcos = cfg.scale * dlogits
    dcos[rows, labels] *= dphi

    dx_hat = dcos @ w_hat
    grad_x = (dx_hat - np.sum(dx_hat * x_hat, axis=1, keepdims=True) * x_hat) / x_norm
    # d cos_ij / d w_hat_j = x_hat_i, projected off w_hat_j
    dw_hat = dcos.T @ x_hat
    grad_w = (dw_hat - np.sum(dw_hat * w_hat, axis=1, keepdims=True) * w_hat) / w_norm
    return loss, grad_x, grad_w


def aam_grad(
    embedding: np.ndarray,
    head: ClassifierHead,
    label: int,
    cfg: AamConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    """:return: (grad w.r.t. the embedding, grad w.r.t. the head weights)"""
    _, grad_x, grad_w = aam_grad_batch(embedding, head, [label], cfg)
    return grad_x[0], grad_w
