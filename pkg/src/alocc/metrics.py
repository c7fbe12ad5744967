"""F1, ROC-AUC and equal error rate for one-class scores.

Scores are target likelihoods: higher means "more like the target class".
A sample is accepted as target iff ``score > tau``; ties at ``tau`` go to
novelty.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DimensionError, UsageError

POSITIVE_INLIER = "inlier"
POSITIVE_OUTLIER = "outlier"


@dataclass
class LabeledScores:
    scores: np.ndarray
    is_inlier: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).ravel()
        self.is_inlier = np.asarray(self.is_inlier, dtype=bool).ravel()
        if self.scores.shape != self.is_inlier.shape:
            raise DimensionError(f"{self.scores.size} scores but {self.is_inlier.size} labels")

    def __len__(self) -> int:
        return self.scores.size

    def require_both_classes(self) -> None:
        n_in = int(self.is_inlier.sum())
        if n_in == 0 or n_in == len(self):
            raise UsageError("metric needs at least one inlier and one outlier")


@dataclass
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass
class MetricReport:
    tau: float
    f1: float
    auc: float
    eer: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def confusion(ls: LabeledScores, tau: float, positive: str = POSITIVE_INLIER) -> Confusion:
    """Counts with ``positive`` as the positive class."""
    pred_target = ls.scores > tau
    truth = ls.is_inlier
    if positive == POSITIVE_OUTLIER:
        pred_target, truth = ~pred_target, ~truth
    elif positive != POSITIVE_INLIER:
        raise ValueError(f"positive must be 'inlier' or 'outlier', got {positive!r}")
    tp = int(np.sum(pred_target & truth))
    fp = int(np.sum(pred_target & ~truth))
    fn = int(np.sum(~pred_target & truth))
    tn = len(ls) - tp - fp - fn
    return Confusion(tp, fp, tn, fn)


def f1_from_counts(c: Confusion) -> float:
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def f1(ls: LabeledScores, tau: float, positive: str = POSITIVE_INLIER) -> float:
    if len(ls) == 0:
        raise UsageError("f1 of an empty score set")
    return f1_from_counts(confusion(ls, tau, positive))


def roc_auc(ls: LabeledScores) -> float:
    """P(inlier score > outlier score) + 0.5 P(tie), via average ranks."""
    ls.require_both_classes()
    ranks = rankdata(ls.scores, method="average")
    n_in = int(ls.is_inlier.sum())
    n_out = len(ls) - n_in
    u = ranks[ls.is_inlier].sum() - n_in * (n_in + 1) / 2.0
    return float(u / (n_in * n_out))


def roc_points(ls: LabeledScores) -> tuple:
    """(FPR, FNR) at every distinct threshold, ordered by increasing threshold.

    The sweep starts below the lowest score (everything accepted) and ends at
    the highest score (everything rejected).
    """
    ls.require_both_classes()
    thresholds = np.unique(ls.scores)
    inl = np.sort(ls.scores[ls.is_inlier])
    out = np.sort(ls.scores[~ls.is_inlier])
    rejected_in = np.searchsorted(inl, thresholds, side="right")
    rejected_out = np.searchsorted(out, thresholds, side="right")
    fnr = np.concatenate([[0.0], rejected_in / inl.size])
    fpr = np.concatenate([[1.0], 1.0 - rejected_out / out.size])
    return fpr, fnr


def eer(ls: LabeledScores) -> float:
    """Rate where FPR == FNR, linearly interpolated along the ROC polyline."""
    fpr, fnr = roc_points(ls)
    gap = fpr - fnr  # non-increasing: starts at 1, ends at -1
    hit = np.flatnonzero(gap <= 0)[0]
    if gap[hit] == 0:
        return float(fpr[hit])
    a, b = hit - 1, hit
    t = gap[a] / (gap[a] - gap[b])
    return float(fpr[a] + t * (fpr[b] - fpr[a]))


def evaluate(ls: LabeledScores, tau: float, positive: str = POSITIVE_INLIER) -> MetricReport:
    c = confusion(ls, tau, positive)
    return MetricReport(tau=float(tau), f1=f1_from_counts(c), auc=roc_auc(ls), eer=eer(ls),
                        tp=c.tp, fp=c.fp, tn=c.tn, fn=c.fn)
