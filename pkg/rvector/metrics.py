"""Detection error trade-off metrics and retrieval mean average precision."""
from typing import Iterable, Optional, Sequence, Set, Tuple

import numpy as np
from attrs import define, field

from .constants import DEFAULT_P_TARGET, RETRIEVAL_TOP_K
from .errors import MetricError

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


@define(frozen=True, slots=True, eq=False)
class DetCurve:
    """
    Miss and false-alarm rates of the rule "accept iff score >= threshold".

    thresholds run from -inf through every unique score to +inf.
    """

    thresholds: np.ndarray
    fnr: np.ndarray
    fpr: np.ndarray
    n_target: int
    n_nontarget: int

    def __len__(self) -> int:
        return int(self.thresholds.size)

    def to_text(self) -> str:
        return "".join(
            "{!r} {!r} {!r}\n".format(float(t), float(m), float(f))
            for t, m, f in zip(self.thresholds, self.fnr, self.fpr)
        )


def _check_p_target(instance, attribute, value) -> None:
    if not 0.0 < value < 1.0:
        raise MetricError("p_target must lie in (0, 1), got {!r}".format(value))


def _check_cost(instance, attribute, value) -> None:
    if value <= 0:
        raise MetricError("{} must be positive, got {!r}".format(attribute.name, value))


@define(frozen=True, slots=True)
class DcfParams:
    p_target: float = field(default=DEFAULT_P_TARGET, validator=_check_p_target)
    c_miss: float = field(default=1.0, validator=_check_cost)
    c_fa: float = field(default=1.0, validator=_check_cost)
    normalize: bool = field(default=True)

    @property
    def divisor(self) -> float:
        if not self.normalize:
            return 1.0
        return min(self.c_miss * self.p_target, self.c_fa * (1.0 - self.p_target))

    def cost(self, fnr, fpr):
        return (
            self.c_miss * self.p_target * np.asarray(fnr)
            + self.c_fa * (1.0 - self.p_target) * np.asarray(fpr)
        ) / self.divisor


def split_scores(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise MetricError(
            "{} scores but {} labels".format(scores.size, labels.size)
        )
    return scores[labels], scores[~labels]


def det_sweep(scores, labels) -> DetCurve:
    """
    One curve point per unique score plus both infinities.

    :param labels: truthy for target trials
    """
    targets, nontargets = split_scores(scores, labels)
    if targets.size == 0 or nontargets.size == 0:
        raise MetricError(
            "need target and nontarget trials, got {} and {}".format(
                targets.size, nontargets.size
            )
        )
    thresholds = np.concatenate(
        [[-np.inf], np.unique(np.concatenate([targets, nontargets])), [np.inf]]
    )
    targets.sort()
    nontargets.sort()
    misses = np.searchsorted(targets, thresholds, side="left")
    false_alarms = nontargets.size - np.searchsorted(nontargets, thresholds, side="left")
    return DetCurve(
        thresholds=thresholds,
        fnr=misses / targets.size,
        fpr=false_alarms / nontargets.size,
        n_target=int(targets.size),
        n_nontarget=int(nontargets.size),
    )


def eer(curve: DetCurve) -> float:
    """Equal error rate in percent, interpolated linearly between curve points."""
    gap = curve.fnr - curve.fpr
    i = int(np.argmax(gap >= 0))
    if gap[i] == 0 or i == 0:
        return float(100.0 * (curve.fnr[i] + curve.fpr[i]) / 2.0)
    d_fnr = curve.fnr[i] - curve.fnr[i - 1]
    d_fpr = curve.fpr[i] - curve.fpr[i - 1]
    alpha = (curve.fpr[i - 1] - curve.fnr[i - 1]) / (d_fnr - d_fpr)
    return float(100.0 * (curve.fnr[i - 1] + alpha * d_fnr))


def min_dcf(curve: DetCurve, params: DcfParams = DcfParams()) -> Tuple[float, float]:
    """Minimum detection cost and the smallest threshold attaining it."""
    costs = params.cost(curve.fnr, curve.fpr)
    i = int(np.argmin(costs))
    return float(costs[i]), float(curve.thresholds[i])


def operating_point(curve: DetCurve, threshold: float) -> Tuple[float, float]:
    """(FNR %, FPR %) of the accept-iff->=-threshold rule at any threshold."""
    # rates only change at curve thresholds: take the first one >= threshold
    i = int(np.searchsorted(curve.thresholds, threshold, side="left"))
    i = min(i, len(curve) - 1)
    return float(100.0 * curve.fnr[i]), float(100.0 * curve.fpr[i])


def average_precision(
    ranking: Sequence[str], relevant: Set[str], k: int = RETRIEVAL_TOP_K
) -> float:
    if not ranking:
        raise MetricError("cannot score an empty ranking")
    if not relevant:
        raise MetricError("query has no relevant items")
    hits, total = 0, 0.0
    for rank, item in enumerate(ranking[:k], start=1):
        if item in relevant:
            hits += 1
            total += hits / rank
    return total / min(len(relevant), k)


def mean_average_precision(
    rankings: Sequence[Sequence[str]],
    relevance: Sequence[Iterable[str]],
    k: int = RETRIEVAL_TOP_K,
) -> float:
    """
    mAP over top-k lists; each query's AP is normalized by min(#relevant, k).
    """
    if len(rankings) != len(relevance):
        raise MetricError(
            "{} rankings but {} relevance sets".format(len(rankings), len(relevance))
        )
    if not rankings:
        raise MetricError("no queries to evaluate")
    return float(
        np.mean(
            [average_precision(r, set(rel), k) for r, rel in zip(rankings, relevance)]
        )
    )


@define(frozen=True, slots=True)
class EvaluationReport:
    min_dcf: float
    threshold: float
    eer: float
    fnr: float
    fpr: float
    n_target: int
    n_nontarget: int
    p_target: float

    def to_text(self) -> str:
        return (
            "min_dcf={:.4f}\n"
            "threshold={!r}\n"
            "eer={:.3f}\n"
            "fnr={:.2f}\n"
            "fpr={:.3f}\n"
            "n_target={}\n"
            "n_nontarget={}\n"
            "p_target={!r}\n"
        ).format(
            self.min_dcf,
            self.threshold,
            self.eer,
            self.fnr,
            self.fpr,
            self.n_target,
            self.n_nontarget,
            self.p_target,
        )


def evaluate(
    scores, labels, params: DcfParams = DcfParams(), curve: Optional[DetCurve] = None
) -> EvaluationReport:
    """minDCF, its threshold, EER and the FNR/FPR pair at that threshold."""
    if curve is None:
        curve = det_sweep(scores, labels)
    value, threshold = min_dcf(curve, params)
    fnr, fpr = operating_point(curve, threshold)
    return EvaluationReport(
        min_dcf=value,
        threshold=threshold,
        eer=eer(curve),
        fnr=fnr,
        fpr=fpr,
        n_target=curve.n_target,
        n_nontarget=curve.n_nontarget,
        p_target=params.p_target,
    )
