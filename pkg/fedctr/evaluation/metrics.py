from typing import Sequence, Tuple

import numba
import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


def _check(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise MetricError(
            f"Got {scores.size} scores but {labels.size} labels."
        )
    if not np.all((labels == 0) | (labels == 1)):
        raise MetricError("Labels must be 0 or 1.")
    if np.isnan(scores).any():
        raise MetricError("Scores must not be NaN.")
    return scores, labels.astype(bool)


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve.

    The fraction of (positive, negative) pairs in which the positive scores
    higher, with tied pairs counting one half. Computed from average ranks.

    Raises:
        MetricError: If only one class is present.
    """
    scores, labels = _check(scores, labels)
    num_pos = int(labels.sum())
    num_neg = labels.size - num_pos
    if num_pos == 0 or num_neg == 0:
        raise MetricError("AUC is undefined unless both classes are present.")
    ranks = rankdata(scores, method="average")
    concordant = ranks[labels].sum() - num_pos * (num_pos + 1) / 2
    return float(concordant / (num_pos * num_neg))


@numba.njit
def _count_pairs(pos: np.ndarray, neg: np.ndarray):
    concordant = 0
    ties = 0
    for i in range(pos.shape[0]):
        for j in range(neg.shape[0]):
            if pos[i] > neg[j]:
                concordant += 1
            elif pos[i] == neg[j]:
                ties += 1
    return concordant, ties


def auc_pairwise(scores: Sequence[float], labels: Sequence[int]) -> float:
    """AUC by explicit O(n^2) pair counting. Agrees exactly with :func:`auc`."""
    scores, labels = _check(scores, labels)
    pos = scores[labels]
    neg = scores[~labels]
    if pos.size == 0 or neg.size == 0:
        raise MetricError("AUC is undefined unless both classes are present.")
    concordant, ties = _count_pairs(pos, neg)
    return float((concordant + 0.5 * ties) / (pos.size * neg.size))


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mean, over the positives, of the precision at each positive's rank.

    Items are ranked by descending score. Tied scores keep their input order.

    Raises:
        MetricError: If there are no positives.
    """
    scores, labels = _check(scores, labels)
    if not labels.any():
        raise MetricError("Average precision requires at least one positive.")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    hits = np.cumsum(ranked)
    precision = hits / np.arange(1, ranked.size + 1)
    return float(precision[ranked].mean())
