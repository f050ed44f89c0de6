"""Simulated annotator for closed-loop experiments.

The annotator scans the presented window. If a true match is on screen
it confirms the best-ranked one; otherwise it flags a strong negative,
chosen among the window items whose ground-truth dissimilarity to the
probe's identity is at or above a configurable quantile, so the flagged
item really is a confidently wrong one. All randomness is seeded per
probe, which makes every session replayable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .data import Dataset, FeedbackEvent, FeedbackLabel, Probe
from .ranking import RankedList, rank_of


@dataclass(frozen=True)
class OraclePolicy:
    window_k: int = 50
    max_rounds: int = 3
    noise_rate: float = 0.0
    strongness_quantile: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must lie in [0, 1]")
        if not 0.0 <= self.strongness_quantile <= 1.0:
            raise ValueError("strongness_quantile must lie in [0, 1]")
        if self.window_k < 1 or self.max_rounds < 1:
            raise ValueError("window and round budget must be at least 1")


def make_dissimilarity(dataset: Dataset, probe: Probe) -> Callable[[str], float]:
    """Ground-truth-space distance from a gallery item to the probe's
    identity centroid. Falls back to observed-feature distance to the
    probe when the dataset carries no latent coordinates."""
    space = dataset.oracle_space
    if space and probe.item_id in space:
        member_ids = [probe.item_id] + [
            it.item_id for it in dataset.gallery.items
            if it.person_id == probe.person_id and it.item_id in space
        ]
        centroid = np.mean([space[i] for i in member_ids], axis=0)

        def dissim(item_id: str) -> float:
            return float(np.linalg.norm(space[item_id] - centroid))

        return dissim

    gallery = dataset.gallery

    def dissim_observed(item_id: str) -> float:
        return float(np.linalg.norm(gallery.item(item_id).feature - probe.feature))

    return dissim_observed


def next_feedback(
    ranked: RankedList,
    probe_id: str,
    match_ids: frozenset[str],
    round_idx: int,
    policy: OraclePolicy,
    rng: np.random.Generator,
    dissimilarity: Callable[[str], float],
    wall_time: float,
) -> Optional[FeedbackEvent]:
    """One annotator decision. None once the round budget is spent."""
    if round_idx >= policy.max_rounds:
        return None
    window = ranked.top(policy.window_k)
    window_ids = list(window.ids)

    if policy.noise_rate > 0.0 and rng.random() < policy.noise_rate:
        # slip of the hand: a uniformly random window item, labelled honestly
        item_id = window_ids[int(rng.integers(len(window_ids)))]
        label = (
            FeedbackLabel.TRUE_MATCH if item_id in match_ids else FeedbackLabel.STRONG_NEGATIVE
        )
        return FeedbackEvent(probe_id, item_id, label, rank_of(ranked, item_id), wall_time)

    in_window = [iid for iid in window_ids if iid in match_ids]
    if in_window:
        best = min(in_window, key=window.position_of)
        return FeedbackEvent(
            probe_id, best, FeedbackLabel.TRUE_MATCH, rank_of(ranked, best), wall_time
        )

    dists = np.asarray([dissimilarity(iid) for iid in window_ids])
    threshold = float(np.quantile(dists, policy.strongness_quantile))
    candidates = [iid for iid, d in zip(window_ids, dists) if d >= threshold]
    item_id = candidates[int(rng.integers(len(candidates)))]
    return FeedbackEvent(
        probe_id, item_id, FeedbackLabel.STRONG_NEGATIVE, rank_of(ranked, item_id), wall_time
    )


class SimulatedAnnotator:
    """Feedback source for one probe session, usable directly with
    ``run_probe_session``. Event times come from a virtual clock
    (probe_index + round/10) so simulated logs replay byte-identically.
    """

    def __init__(
        self,
        dataset: Dataset,
        probe: Probe,
        policy: OraclePolicy,
        probe_index: int = 0,
    ):
        self.probe = probe
        self.policy = policy
        self.probe_index = probe_index
        self.match_ids = dataset.matches_of(probe)
        self.dissimilarity = make_dissimilarity(dataset, probe)
        self.rng = np.random.default_rng([policy.seed, probe_index])

    def __call__(self, round_idx: int, ranked: RankedList) -> Optional[FeedbackEvent]:
        return next_feedback(
            ranked,
            self.probe.item_id,
            self.match_ids,
            round_idx,
            self.policy,
            self.rng,
            self.dissimilarity,
            wall_time=float(self.probe_index) + (round_idx + 1) / 10.0,
        )
