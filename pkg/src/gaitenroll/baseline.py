"""Distance-threshold enrollment baseline.

Scores a probe by negated distance to the gallery (nearest vector, or the
mean of the k smallest distances) so that higher means "already enrolled",
tunes the decision threshold on a validation probe set, and reports metrics
on a test probe set at that fixed threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, GalleryError
from .gallery import EmbeddingRecord, GallerySnapshot
from .metrics import average_precision, best_threshold, confusion, f1, mcc, roc_auc

MODES = ("min_dist", "mean_k_dist")


@dataclass(frozen=True)
class BaselineConfig:
    mode: str = "min_dist"
    k: int = 3
    objective: str = "mcc"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"baseline mode must be one of {MODES}, got '{self.mode}'")
        if self.k < 1:
            raise ConfigError("baseline k must be >= 1")
        if self.objective not in ("mcc", "f1"):
            raise ConfigError("baseline objective must be 'mcc' or 'f1'")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "k": self.k, "objective": self.objective}


def baseline_score(
    snapshot: GallerySnapshot, probe_vec: np.ndarray, config: BaselineConfig
) -> float:
    """Negated gallery distance; higher means more likely already enrolled."""
    if len(snapshot) == 0:
        raise GalleryError("empty gallery")
    probe = np.asarray(probe_vec, dtype=np.float64)
    if probe.shape != (snapshot.dim,):
        raise GalleryError(f"probe has shape {probe.shape}, expected ({snapshot.dim},)")
    diff = snapshot.matrix - probe
    dists = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if config.mode == "min_dist":
        return float(-dists.min())
    if config.k > len(snapshot):
        raise GalleryError(f"baseline k={config.k} exceeds gallery size {len(snapshot)}")
    smallest = np.partition(dists, config.k - 1)[: config.k]
    return float(-smallest.mean())


def score_probes(
    snapshot: GallerySnapshot,
    probes: Sequence[tuple[EmbeddingRecord, int]],
    config: BaselineConfig,
) -> tuple[list[float], list[int]]:
    scores = [baseline_score(snapshot, rec.vec, config) for rec, _ in probes]
    labels = [label for _, label in probes]
    return scores, labels


def baseline_fit_eval(
    val_snapshot: GallerySnapshot,
    val_probes: Sequence[tuple[EmbeddingRecord, int]],
    test_snapshot: GallerySnapshot,
    test_probes: Sequence[tuple[EmbeddingRecord, int]],
    config: BaselineConfig,
) -> dict:
    """Tune the threshold on validation scores, evaluate on test scores.

    Returns a plain dict with mcc/f1 at the tuned threshold, threshold-free
    auc/ap, the confusion counts, plus the per-probe test scores.
    """
    val_scores, val_labels = score_probes(val_snapshot, val_probes, config)
    threshold, _ = best_threshold(val_scores, val_labels, config.objective)
    test_scores, test_labels = score_probes(test_snapshot, test_probes, config)
    decisions = [1 if s >= threshold else 0 for s in test_scores]
    conf = confusion(test_labels, decisions)
    return {
        "threshold": threshold,
        "mcc": mcc(conf),
        "f1": f1(conf),
        "auc": roc_auc(test_scores, test_labels),
        "ap": average_precision(test_scores, test_labels),
        "confusion": conf,
        "scores": test_scores,
        "labels": test_labels,
        "decisions": decisions,
    }
