"""AUROC/accuracy metrics and ensembling of prediction sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionSet:
    """Per-meme probability of "hateful" for one model run."""

    name: str
    scores: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for meme_id, score in self.scores.items():
            if not 0.0 <= score <= 1.0:
                raise MetricError(
                    f"{self.name}: score {score} for id {meme_id} outside [0, 1]")


def auroc(predictions: PredictionSet, labels: Mapping[int, int]) -> float:
    """Probability a random positive outranks a random negative, ties = 1/2.

    Computed via the Mann-Whitney rank-sum formulation with average ranks,
    which handles tied scores exactly.
    """
    missing = [i for i in predictions.scores if i not in labels]
    if missing:
        raise MetricError(f"unlabeled ids in prediction set: {sorted(missing)}")
    ids = sorted(predictions.scores)
    y = np.asarray([labels[i] for i in ids])
    s = np.asarray([predictions.scores[i] for i in ids], dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC undefined: both classes must be present")
    ranks = rankdata(s)  # average ranks, 1-based
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def accuracy(predictions: PredictionSet, labels: Mapping[int, int],
             threshold: float = 0.5) -> float:
    """Fraction of ids whose thresholded score equals the label."""
    missing = [i for i in predictions.scores if i not in labels]
    if missing:
        raise MetricError(f"unlabeled ids in prediction set: {sorted(missing)}")
    if not predictions.scores:
        raise MetricError("empty prediction set")
    hits = sum(int(score >= threshold) == labels[i]
               for i, score in predictions.scores.items())
    return hits / len(predictions.scores)


def ensemble(sets: Sequence[PredictionSet], method: str = "mean",
             name: str = "ensemble") -> PredictionSet:
    """Combine prediction sets by mean probability or mean fractional rank.

    rank_mean replaces each set's scores by their fractional ranks rescaled
    to [0, 1] (ties get average rank) before averaging, so only each model's
    ordering matters.
    """
    if not sets:
        raise EnsembleError("need at least one prediction set")
    ids = sorted(sets[0].scores)
    for ps in sets[1:]:
        if sorted(ps.scores) != ids:
            diff = set(ps.scores).symmetric_difference(sets[0].scores)
            raise EnsembleError(
                f"id coverage mismatch between {sets[0].name} and {ps.name}: "
                f"{sorted(diff)}")
    if method == "mean":
        columns = [np.asarray([ps.scores[i] for i in ids]) for ps in sets]
    elif method == "rank_mean":
        columns = []
        for ps in sets:
            raw = np.asarray([ps.scores[i] for i in ids], dtype=np.float64)
            ranks = rankdata(raw)
            if len(ids) > 1:
                columns.append((ranks - 1.0) / (len(ids) - 1.0))
            else:
                columns.append(np.full(1, 0.5))
    else:
        raise EnsembleError(f"unknown ensemble method {method!r}")
    combined = np.mean(columns, axis=0)
    return PredictionSet(name=name,
                         scores={i: float(v) for i, v in zip(ids, combined)})
