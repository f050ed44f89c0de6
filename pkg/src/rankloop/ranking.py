"""Mahalanobis scoring and tie-aware ranking of a gallery against a probe.

The ranking function is f(g) = -(p - g)' M (p - g) for a positive
definite M, so scores are never positive and larger means closer. Ranks
count how many other items score at or above the item in question, which
makes tied items inflate each other's rank; display order breaks ties by
ascending item_id so output is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Gallery, Probe


@dataclass(frozen=True)
class RankedList:
    """Gallery ids sorted by non-increasing score."""

    ids: tuple[str, ...]
    scores: np.ndarray  # float64, aligned with ids, non-increasing

    def __post_init__(self):
        object.__setattr__(self, "_pos", {iid: i for i, iid in enumerate(self.ids)})

    def __len__(self) -> int:
        return len(self.ids)

    def position_of(self, item_id: str) -> int:
        """0-based display position."""
        return self._pos[item_id]

    def score_of(self, item_id: str) -> float:
        return float(self.scores[self._pos[item_id]])

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._pos

    def top(self, k: int) -> "RankedList":
        k = max(0, min(k, len(self.ids)))
        return RankedList(self.ids[:k], self.scores[:k])


def metric_matrix(model, dim: int) -> np.ndarray:
    """Coerce a model argument to a (dim, dim) matrix. None means the
    plain squared-L2 baseline (identity metric)."""
    if model is None:
        return np.eye(dim)
    matrix = getattr(model, "matrix", model)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (dim, dim):
        raise ValueError(f"metric has shape {matrix.shape}, features have dim {dim}")
    return matrix


def pair_scores(probe_feature: np.ndarray, features: np.ndarray, model=None) -> np.ndarray:
    """Scores of every feature row against the probe: -(z' M z) per row."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    matrix = metric_matrix(model, features.shape[1])
    z = features - np.asarray(probe_feature, dtype=np.float64)
    return -np.einsum("ij,ij->i", z @ matrix, z)


def score_one(probe_feature: np.ndarray, feature: np.ndarray, model=None) -> float:
    """Single-pair score, computed without the batched path so callers
    that need exact self-consistency with z' M z get it."""
    z = np.asarray(probe_feature, dtype=np.float64) - np.asarray(feature, dtype=np.float64)
    matrix = metric_matrix(model, z.shape[0])
    return float(-(z @ (matrix @ z)))


def order_by_score(ids: Sequence[str], scores: np.ndarray) -> np.ndarray:
    """Indices sorting by descending score, ties by ascending item_id."""
    # lexsort uses the last key as primary
    return np.lexsort((np.asarray(ids, dtype=object), -np.asarray(scores)))


def rank_gallery(probe: Probe, gallery: Gallery, model=None) -> RankedList:
    """Full ranked list of the gallery for one probe under a metric."""
    scores = pair_scores(probe.feature, gallery.features, model)
    order = order_by_score(gallery.ids, scores)
    return RankedList(tuple(gallery.ids[i] for i in order), scores[order])


def rank_of(ranked: RankedList, item_id: str) -> int:
    """Tie-aware rank: the number of other items scoring at or above the
    given item. 0 means nothing else scores as high."""
    s = ranked.score_of(item_id)
    return int(np.count_nonzero(ranked.scores >= s)) - 1


def ranks_from_scores(scores: np.ndarray) -> np.ndarray:
    """Vectorised tie-aware ranks for every scored item at once."""
    scores = np.asarray(scores)
    return (scores[None, :] >= scores[:, None]).sum(axis=1) - 1
