"""AUC and LogLoss for binary click labels."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import InputError, UndefinedMetricError

PROB_CLAMP = 1e-7


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or s.shape != y.shape or s.size < 1:
        raise InputError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def auc_score(scores, labels):
    """Rank-statistic AUC; tied scores contribute one half."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    ranks = rankdata(s, method="average")
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def log_loss(probs, labels):
    p, y = _check(probs, labels)
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def evaluate_metrics(scores, labels):
    """``(auc, logloss)`` for predicted click probabilities.

    With a single class present :class:`UndefinedMetricError` is raised; the
    LogLoss is still computed and carried on the exception as ``.logloss``.
    """
    loss = log_loss(scores, labels)
    try:
        auc = auc_score(scores, labels)
    except UndefinedMetricError as exc:
        exc.logloss = loss
        raise
    return auc, loss
