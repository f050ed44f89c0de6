"""Rank-sensitive losses attached to annotator feedback.

A true match found deep in the list is expensive (harmonic growth in the
rank), while a strong negative sitting high is cheap but never free: its
loss falls off linearly with rank. Margin violations between a selected
item and any other gallery item use a unit-margin hinge on scores.
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import FeedbackLabel


@dataclass(frozen=True)
class LossSchedule:
    """Per-position weights for a gallery of ``n_gallery`` items.

    True-match weight at list position i (1-based) is 1/i; the flat
    strong-negative weight is 1/(n_gallery - 1).
    """

    n_gallery: int

    def __post_init__(self):
        if self.n_gallery < 2:
            raise ValueError("loss schedule needs at least 2 gallery items")

    def true_match_weight(self, i: int) -> float:
        if i < 1:
            raise ValueError("positions are 1-based")
        return 1.0 / i

    def negative_weight(self) -> float:
        return 1.0 / (self.n_gallery - 1)

    def loss(self, rank: int, label: FeedbackLabel) -> float:
        return rank_loss(rank, self.n_gallery, label)


def rank_loss(rank: int, n_gallery: int, label: FeedbackLabel) -> float:
    """Loss of an annotated item sitting at tie-aware ``rank`` (0-based).

    TRUE_MATCH: sum of 1/i for i = 1..rank (0 at rank 0, the item is
    already on top). STRONG_NEGATIVE: (n_gallery - rank) / (n_gallery - 1),
    the tail mass of the flat weights below the item.
    """
    if not 0 <= rank < n_gallery:
        raise ValueError(f"rank {rank} out of range for gallery of {n_gallery}")
    if n_gallery < 2:
        raise ValueError("rank loss needs at least 2 gallery items")
    if label is FeedbackLabel.TRUE_MATCH:
        return float(sum(1.0 / i for i in range(1, rank + 1)))
    return float(n_gallery - rank) / float(n_gallery - 1)


def hinge_violation(
    score_selected: float,
    score_other: float,
    label: FeedbackLabel,
    margin: float = 1.0,
) -> float:
    """Unit-margin hinge between the selected item and one other item.

    TRUE_MATCH wants the selected score at least ``margin`` above the
    other's; STRONG_NEGATIVE wants it at least ``margin`` below.
    """
    if label is FeedbackLabel.TRUE_MATCH:
        gap = margin - score_selected + score_other
    else:
        gap = margin - score_other + score_selected
    return max(0.0, float(gap))


def margin_sign(label: FeedbackLabel) -> float:
    """+1 for TRUE_MATCH, -1 for STRONG_NEGATIVE; the direction the
    selected item's score should move relative to its violator."""
    return 1.0 if label is FeedbackLabel.TRUE_MATCH else -1.0
