"""Evaluation metrics: macro-averaged F1, Kendall tau-b, accuracy."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np


class UndefinedMetricError(ValueError):
    """Raised when a metric has no defined value (e.g. all-tied ranks)."""


def macro_avg_f1(gold: Sequence, pred: Sequence, classes: Sequence) -> float:
    """Unweighted mean of per-class F1 over every class in ``classes``.

    A precision or recall with zero denominator counts as 0, and a class
    absent from both gold and predictions contributes an F1 of 0.
    """
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} pred")
    if not gold:
        raise ValueError("empty label lists")
    f1s = []
    for c in classes:
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        if precision + recall > 0:
            f1s.append(2 * precision * recall / (precision + recall))
        else:
            f1s.append(0.0)
    return float(sum(f1s) / len(f1s))


def accuracy(gold: Sequence, pred: Sequence) -> float:
    """Fraction of positions where prediction equals gold."""
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} pred")
    if not gold:
        raise ValueError("empty label lists")
    return sum(1 for g, p in zip(gold, pred) if g == p) / len(gold)


def _pair_counts(x: np.ndarray, y: np.ndarray) -> tuple[int, int, int, int]:
    # Vectorized O(n^2) pair classification; n stays in the low thousands
    # for every evaluation in this package.
    iu = np.triu_indices(len(x), k=1)
    sx = np.sign(x[:, None] - x[None, :])[iu]
    sy = np.sign(y[:, None] - y[None, :])[iu]
    prod = sx * sy
    concordant = int(np.count_nonzero(prod > 0))
    discordant = int(np.count_nonzero(prod < 0))
    tied_x_only = int(np.count_nonzero((sx == 0) & (sy != 0)))
    tied_y_only = int(np.count_nonzero((sy == 0) & (sx != 0)))
    return concordant, discordant, tied_x_only, tied_y_only


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall tau-b rank correlation with tie correction.

    tau-b = (C - D) / sqrt((C + D + Tx) * (C + D + Ty)) where C and D count
    concordant and discordant pairs and Tx, Ty count pairs tied in exactly
    one of the two variables. Raises :class:`UndefinedMetricError` when
    either variable is completely tied (zero denominator).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d sequences of equal length")
    if len(x) < 2:
        raise ValueError("need at least 2 observations")
    c, d, tx, ty = _pair_counts(x, y)
    x_varying = c + d + ty  # pairs whose x values differ
    y_varying = c + d + tx  # pairs whose y values differ
    if x_varying == 0 or y_varying == 0:
        raise UndefinedMetricError("tau undefined: one variable is all-tied")
    return (c - d) / math.sqrt(x_varying * y_varying)


def kendall_tau_or_zero(x: Sequence[float], y: Sequence[float]) -> float:
    """:func:`kendall_tau`, mapping undefined (all-tied) cases to 0.0.

    Used when scoring models during training or grid search, where a
    degenerate constant predictor should rank worst rather than crash.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        return 0.0
    try:
        return kendall_tau(x, y)
    except UndefinedMetricError:
        return 0.0
