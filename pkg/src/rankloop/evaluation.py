"""Recognition metrics over ranked lists, and effort statistics over
interaction logs.

Positions are taken from the deterministic display order (descending
score, ties by ascending item_id). Probes with no true match in the
list are excluded from rate computations but counted and surfaced via a
warning so silent data problems do not inflate results.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import FeedbackEvent, FeedbackLabel
from .ranking import RankedList


def _match_positions(ranked: RankedList, match_ids: frozenset[str] | set[str]) -> list[int]:
    """0-based display positions of every true match present in the list."""
    return sorted(ranked.position_of(m) for m in match_ids if m in ranked)


def _warn_excluded(n_excluded: int, metric: str) -> None:
    if n_excluded:
        warnings.warn(
            f"{metric}: excluded {n_excluded} probe(s) with no true match in the list",
            stacklevel=3,
        )


def cmc(
    rank_lists: Mapping[str, RankedList],
    matches: Mapping[str, frozenset[str] | set[str]],
    max_rank: int | None = None,
) -> np.ndarray:
    """Cumulative matching curve. Entry k (1-based) is the fraction of
    probes whose best true match sits within the top k positions; entry
    1 is the usual Rank-1 rate."""
    best: list[int] = []
    excluded = 0
    list_len = 0
    for pid, ranked in rank_lists.items():
        list_len = max(list_len, len(ranked))
        pos = _match_positions(ranked, matches.get(pid, frozenset()))
        if pos:
            best.append(pos[0])
        else:
            excluded += 1
    _warn_excluded(excluded, "cmc")
    if not best:
        raise ValueError("cmc needs at least one probe with a true match")
    depth = max_rank if max_rank is not None else list_len
    curve = np.empty(depth, dtype=np.float64)
    arr = np.asarray(best)
    for k in range(1, depth + 1):
        curve[k - 1] = np.count_nonzero(arr < k) / len(arr)
    return curve


def expected_rank(
    rank_lists: Mapping[str, RankedList],
    matches: Mapping[str, frozenset[str] | set[str]],
) -> float:
    """Mean 1-based position over every true match of every probe."""
    positions: list[int] = []
    excluded = 0
    for pid, ranked in rank_lists.items():
        pos = _match_positions(ranked, matches.get(pid, frozenset()))
        if pos:
            positions.extend(p + 1 for p in pos)
        else:
            excluded += 1
    _warn_excluded(excluded, "expected_rank")
    if not positions:
        raise ValueError("expected_rank needs at least one true match")
    return sum(positions) / len(positions)


def average_precision(ranked: RankedList, match_ids: frozenset[str] | set[str]) -> float | None:
    """Area under precision-recall for one probe; None when no match is
    in the list."""
    pos = _match_positions(ranked, match_ids)
    if not pos:
        return None
    precisions = []
    for hits, p in enumerate(pos, start=1):
        precisions.append(hits / (p + 1))
    return sum(precisions) / len(pos)


def mean_average_precision(
    rank_lists: Mapping[str, RankedList],
    matches: Mapping[str, frozenset[str] | set[str]],
) -> float:
    aps = []
    excluded = 0
    for pid, ranked in rank_lists.items():
        ap = average_precision(ranked, matches.get(pid, frozenset()))
        if ap is None:
            excluded += 1
        else:
            aps.append(ap)
    _warn_excluded(excluded, "mean_average_precision")
    if not aps:
        raise ValueError("mean_average_precision needs at least one true match")
    return sum(aps) / len(aps)


# ---------------------------------------------------------------------------
# effort statistics

@dataclass(frozen=True)
class EffortStats:
    """Session effort summary in the style of a search-cost table.

    ``mean_browsed`` counts, per feedback round, the 1-based position
    implied by the logged tie-aware rank of the selection, summed within
    a probe and averaged over probes that gave feedback. Search time is
    the span of event timestamps within a probe.
    """

    n_probes: int
    found_matches_pct: float
    mean_browsed: float
    mean_feedback: float
    mean_search_time_sec: float
    empty: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def effort_stats(events: Sequence[FeedbackEvent], n_probes: int) -> EffortStats:
    if n_probes < 1:
        raise ValueError("n_probes must be positive")
    if not events:
        return EffortStats(n_probes, 0.0, 0.0, 0.0, 0.0, empty=True)
    by_probe: dict[str, list[FeedbackEvent]] = {}
    for ev in events:
        by_probe.setdefault(ev.probe_id, []).append(ev)
    found = 0
    browsed: list[int] = []
    counts: list[int] = []
    spans: list[float] = []
    for pid, evs in by_probe.items():
        if any(e.label is FeedbackLabel.TRUE_MATCH for e in evs):
            found += 1
        browsed.append(sum(e.rank_at_selection + 1 for e in evs))
        counts.append(len(evs))
        times = [e.wall_time for e in evs]
        spans.append(max(times) - min(times))
    return EffortStats(
        n_probes=n_probes,
        found_matches_pct=100.0 * found / n_probes,
        mean_browsed=sum(browsed) / len(browsed),
        mean_feedback=sum(counts) / len(counts),
        mean_search_time_sec=sum(spans) / len(spans),
    )


def exhaustive_browsed(
    rank_lists: Mapping[str, RankedList],
    matches: Mapping[str, frozenset[str] | set[str]],
) -> float:
    """Images an annotator would scan with no feedback loop at all: the
    mean 1-based display position of the best true match."""
    positions = []
    excluded = 0
    for pid, ranked in rank_lists.items():
        pos = _match_positions(ranked, matches.get(pid, frozenset()))
        if pos:
            positions.append(pos[0] + 1)
        else:
            excluded += 1
    _warn_excluded(excluded, "exhaustive_browsed")
    if not positions:
        raise ValueError("exhaustive_browsed needs at least one true match")
    return sum(positions) / len(positions)


# ---------------------------------------------------------------------------
# report serialisation

def report_to_json(report: dict) -> str:
    """Canonical JSON: sorted keys, stable float repr, newline at end.
    Byte-identical across reruns given identical content."""
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(report_to_json(report))


def write_cmc_csv(path: str | Path, curve: np.ndarray) -> None:
    """Plot-ready CMC export, header ``rank,rate``, ranks 1-based."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "rate"])
        for k, rate in enumerate(np.asarray(curve), start=1):
            writer.writerow([k, repr(float(rate))])


def read_cmc_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["rank", "rate"]:
            raise ValueError(f"bad CMC header {header!r}")
        return np.asarray([float(row[1]) for row in reader])
