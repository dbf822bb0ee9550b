"""Binary-classification metrics with exact tie handling.

Scores are "higher means more likely known/enrolled". AUC uses the
Mann-Whitney pair count with tied pairs worth 1/2, which equals trapezoidal
integration of the ROC curve when tied scores are grouped. Average precision
sorts descending and treats each tied-score block as a single step of the
precision-recall curve. Degenerate denominators follow fixed conventions:
MCC and F1 return 0 rather than dividing by zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _validate_scored(scores: Sequence[float], labels: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or y.ndim != 1 or s.size != y.size:
        raise ValueError(f"scores and labels must be equal-length vectors, got {s.shape} / {y.shape}")
    if s.size == 0:
        raise ValueError("empty score list")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def confusion(labels: Sequence[int], decisions: Sequence[int]) -> Confusion:
    y = np.asarray(labels)
    d = np.asarray(decisions)
    if y.shape != d.shape or y.ndim != 1:
        raise ValueError(f"labels and decisions must be equal-length vectors, got {y.shape} / {d.shape}")
    if not np.all((y == 0) | (y == 1)) or not np.all((d == 0) | (d == 1)):
        raise ValueError("labels and decisions must be 0 or 1")
    return Confusion(
        tp=int(np.sum((y == 1) & (d == 1))),
        fp=int(np.sum((y == 0) & (d == 1))),
        fn=int(np.sum((y == 1) & (d == 0))),
        tn=int(np.sum((y == 0) & (d == 0))),
    )


def mcc(c: Confusion) -> float:
    """Matthews correlation in [-1, 1]; 0 when any denominator factor is 0."""
    f1_ = c.tp + c.fp
    f2_ = c.tp + c.fn
    f3_ = c.tn + c.fp
    f4_ = c.tn + c.fn
    if f1_ == 0 or f2_ == 0 or f3_ == 0 or f4_ == 0:
        return 0.0
    num = c.tp * c.tn - c.fp * c.fn
    return float(num / np.sqrt(float(f1_) * f2_ * f3_ * f4_))


def f1(c: Confusion) -> float:
    """Harmonic mean of precision and recall; 0 on any zero denominator."""
    if c.tp + c.fp == 0 or c.tp + c.fn == 0:
        return 0.0
    p = c.tp / (c.tp + c.fp)
    r = c.tp / (c.tp + c.fn)
    if p + r == 0.0:
        return 0.0
    return float(2.0 * p * r / (p + r))


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability a random positive outscores a random negative, ties worth 1/2."""
    s, y = _validate_scored(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc requires at least one positive and one negative label")
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    wins = 0.0  # positive-over-negative pairs, ties counted half
    neg_below = 0
    i = 0
    n = s.size
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        pos_here = int(y_sorted[i:j].sum())
        neg_here = (j - i) - pos_here
        wins += pos_here * (neg_below + 0.5 * neg_here)
        neg_below += neg_here
        i = j
    return float(wins / (n_pos * n_neg))


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the precision-recall curve with tied scores as single blocks."""
    s, y = _validate_scored(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("average_precision requires at least one positive label")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    ap = 0.0
    tp = 0
    seen = 0
    recall_prev = 0.0
    i = 0
    n = s.size
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i:j].sum())
        seen += j - i
        recall = tp / n_pos
        precision = tp / seen
        ap += (recall - recall_prev) * precision
        recall_prev = recall
        i = j
    return float(ap)


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) per distinct score, descending; starts at (+inf, 0, 0)."""
    s, y = _validate_scored(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_points requires at least one positive and one negative label")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    points = [(float("inf"), 0.0, 0.0)]
    tp = 0
    fp = 0
    i = 0
    n = s.size
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        pos_here = int(y_sorted[i:j].sum())
        tp += pos_here
        fp += (j - i) - pos_here
        points.append((float(s_sorted[i]), fp / n_neg, tp / n_pos))
        i = j
    return points


def pr_points(scores: Sequence[float], labels: Sequence[int]) -> list[tuple[float, float, float]]:
    """(threshold, recall, precision) per distinct score, descending."""
    s, y = _validate_scored(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("pr_points requires at least one positive label")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    points = []
    tp = 0
    seen = 0
    i = 0
    n = s.size
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i:j].sum())
        seen += j - i
        points.append((float(s_sorted[i]), tp / n_pos, tp / seen))
        i = j
    return points


_OBJECTIVES = {"mcc": mcc, "f1": f1}


def best_threshold(
    scores: Sequence[float], labels: Sequence[int], objective: str = "mcc"
) -> tuple[float, float]:
    """Threshold maximizing the objective over decisions (score >= threshold).

    Candidates are midpoints between adjacent distinct sorted scores plus
    -inf/+inf sentinels; the smallest maximizing threshold wins ties.
    """
    if objective not in _OBJECTIVES:
        raise ValueError(f"unknown objective '{objective}' (use one of {sorted(_OBJECTIVES)})")
    s, y = _validate_scored(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise ValueError("best_threshold requires both classes present")
    fn = _OBJECTIVES[objective]
    distinct = np.unique(s)
    candidates = [float("-inf")]
    candidates.extend(
        float(0.5 * (lo + hi)) for lo, hi in zip(distinct[:-1], distinct[1:])
    )
    candidates.append(float("inf"))
    best_t = candidates[0]
    best_v = -float("inf")
    for t in candidates:
        decisions = (s >= t).astype(np.int64)
        value = fn(confusion(y, decisions))
        if value > best_v:
            best_t, best_v = t, value
    return best_t, best_v
