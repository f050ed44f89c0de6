"""Online Mahalanobis metric learning from per-item ranking feedback.

Each annotated item triggers at most one rank-one model update. The
update is the exact stationary point of a Bregman-regularised squared
hinge against the single most violating gallery item: with the log-det
divergence the new inverse metric is the old one plus a scalar multiple
of z z' (z the probe/item difference), and the post-update distance of
the annotated item solves a scalar quadratic in closed form. Positive
roots keep the metric positive definite, so updates cost O(d^2) and
never need an eigendecomposition.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .data import FeedbackEvent, FeedbackLabel, Gallery, Probe
from .losses import hinge_violation, margin_sign, rank_loss
from .ranking import RankedList, pair_scores, rank_gallery, rank_of, score_one

HVM1_MAGIC = b"HVM1"

# z directions shorter than this are treated as a zero difference: the
# rank-one update would be numerically meaningless.
_TINY_DISTANCE = 1e-12


class ModelNotPositiveDefinite(RuntimeError):
    """Raised when the metric cannot be repaired back to PD."""


@dataclass
class MetricModel:
    """Symmetric positive definite metric with an update counter."""

    matrix: np.ndarray
    updates_applied: int = 0

    @classmethod
    def identity(cls, dim: int) -> "MetricModel":
        return cls(np.eye(dim), 0)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def copy(self) -> "MetricModel":
        return MetricModel(self.matrix.copy(), self.updates_applied)

    def validate(self, atol: float = 1e-10) -> None:
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"metric must be square, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("metric contains NaN or Inf")
        if not np.allclose(m, m.T, atol=atol, rtol=0.0):
            raise ValueError("metric is not symmetric")
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise ModelNotPositiveDefinite("metric is not positive definite") from exc


@dataclass(frozen=True)
class HvilConfig:
    """Protocol knobs for one click-and-update loop."""

    eta: float = 0.5
    margin: float = 1.0
    max_rounds_per_probe: int = 3
    window_k: int = 50
    jitter: float = 1e-10
    # Sustained one-sided feedback multiplies the metric without bound; past
    # this scale the conditioning is so poor that definiteness drowns in
    # rounding, so the update refuses instead of returning garbage.
    magnitude_cap: float = 1e12

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.max_rounds_per_probe < 1 or self.window_k < 1:
            raise ValueError("budget and window must be at least 1")
        if self.magnitude_cap <= 0:
            raise ValueError("magnitude_cap must be positive")


@dataclass(frozen=True)
class UpdateContext:
    """Diagnostic record of a single update.

    Scores follow the ranking convention (never positive): ``f_hat`` is
    the selected item's score under the previous model, ``f_v`` the most
    violating item's score under the previous model, and ``f_t`` the
    selected item's score under the updated model. ``loss`` is the rank
    loss that scaled the step and ``b`` the margin sign of the label.
    """

    violator_id: Optional[str]
    f_hat: float
    f_v: Optional[float]
    f_t: Optional[float]
    loss: float
    b: float
    rank: int
    applied: bool
    z: Optional[np.ndarray] = None  # probe minus selected item, as updated


def most_violator(
    probe: Probe,
    selected_id: str,
    label: FeedbackLabel,
    gallery: Gallery,
    model: MetricModel,
    margin: float = 1.0,
) -> Optional[tuple[str, float]]:
    """The gallery item with the largest hinge violation against the
    selected item under ``model``, or None when no hinge is active.
    Ties resolve to the lowest item_id."""
    scores = pair_scores(probe.feature, gallery.features, model)
    sel_idx = gallery.index[selected_id]
    s_sel = scores[sel_idx]
    best: Optional[tuple[str, float]] = None
    for i, iid in enumerate(gallery.ids):
        if i == sel_idx:
            continue
        v = hinge_violation(s_sel, scores[i], label, margin)
        if v <= 0.0:
            continue
        if best is None or v > best[1] or (v == best[1] and iid < best[0]):
            best = (iid, v)
    return best


def _solve_post_update_distance(d_hat: float, d_v: float, b: float, k: float) -> float:
    """Positive root of k*d_hat*f^2 + (1 - k*T*d_hat)*f - d_hat = 0 with
    target T = d_v - b. The roots straddle zero whenever d_hat > 0, so the
    positive root always exists; picking the cancellation-free branch keeps
    it accurate even when T is many orders larger than d_hat."""
    target = d_v - b
    lin = k * target * d_hat - 1.0
    disc = lin * lin + 4.0 * k * d_hat * d_hat
    if not disc > 0.0:
        raise ModelNotPositiveDefinite(f"non-positive discriminant {disc!r}")
    root = math.sqrt(disc)
    if lin >= 0.0:
        return (lin + root) / (2.0 * k * d_hat)
    return 2.0 * d_hat / (root - lin)


def _repair_pd(matrix: np.ndarray, jitter: float) -> np.ndarray:
    """Re-symmetrise; on Cholesky failure bump the diagonal by jitter scaled
    to the matrix magnitude, growing the bump a few times before giving up.
    An absolute bump is useless once eigenvalues span many orders, so the
    floor tracks the largest diagonal entry."""
    sym = (matrix + matrix.T) / 2.0
    try:
        np.linalg.cholesky(sym)
        return sym
    except np.linalg.LinAlgError:
        pass
    scale = max(1.0, float(np.max(np.diag(sym))))
    eye = np.eye(sym.shape[0])
    bump = jitter * scale
    for _ in range(4):
        bumped = sym + bump * eye
        try:
            np.linalg.cholesky(bumped)
            return bumped
        except np.linalg.LinAlgError:
            bump *= 1e3
    raise ModelNotPositiveDefinite("update left the metric indefinite")


def hvil_update(
    model: MetricModel,
    probe: Probe,
    gallery: Gallery,
    event: FeedbackEvent,
    config: HvilConfig = HvilConfig(),
) -> tuple[MetricModel, UpdateContext]:
    """Apply one feedback event. Returns the next model and a context
    record; when the rank loss is zero or no violator exists the model
    is returned unchanged (same object, no copy)."""
    if event.item_id not in gallery.index:
        raise KeyError(f"feedback references unknown item {event.item_id!r}")
    sel = gallery.item(event.item_id)
    z = np.asarray(probe.feature, dtype=np.float64) - np.asarray(sel.feature, dtype=np.float64)
    matrix = model.matrix
    d_hat = float(z @ (matrix @ z))
    if not math.isfinite(d_hat):
        raise ModelNotPositiveDefinite(
            "metric magnitude overflowed; lower eta or rescale features"
        )
    f_hat = -d_hat
    b = margin_sign(event.label)

    scores = pair_scores(probe.feature, gallery.features, model)
    sel_idx = gallery.index[event.item_id]
    rank = int(np.count_nonzero(scores >= scores[sel_idx])) - 1
    loss = rank_loss(rank, len(gallery), event.label)

    def no_op() -> tuple[MetricModel, UpdateContext]:
        ctx = UpdateContext(
            violator_id=None, f_hat=f_hat, f_v=None, f_t=None,
            loss=loss, b=b, rank=rank, applied=False, z=z,
        )
        return model, ctx

    if loss == 0.0 or d_hat <= _TINY_DISTANCE:
        return no_op()
    found = most_violator(probe, event.item_id, event.label, gallery, model, config.margin)
    if found is None:
        return no_op()
    violator_id, _ = found
    vit = gallery.item(violator_id)
    zv = np.asarray(probe.feature, dtype=np.float64) - np.asarray(vit.feature, dtype=np.float64)
    d_v = float(zv @ (matrix @ zv))

    k = config.eta * loss
    d_t = _solve_post_update_distance(d_hat, d_v, b * config.margin, k)
    # The rank-one coefficient beta / (1 + beta*d_hat) collapses to
    # (d_hat - d_t) / d_hat^2, which avoids the cancellation between d_t
    # and the target when both dwarf d_hat. The post-update Gram factor
    # I - gamma*w w^T (w = M^{1/2} z) has smallest eigenvalue d_t/d_hat > 0,
    # so definiteness survives by construction.
    gamma = (d_hat - d_t) / (d_hat * d_hat)
    mz = matrix @ z
    # overflow here is detected and reported below, not worth a warning
    with np.errstate(over="ignore", invalid="ignore"):
        new_matrix = np.outer(mz, mz)
        new_matrix *= -gamma
        new_matrix += matrix
    diag = np.diagonal(new_matrix)
    if not np.isfinite(new_matrix).all() or float(np.max(diag)) > config.magnitude_cap:
        raise ModelNotPositiveDefinite(
            "metric magnitude overflowed; lower eta or rescale features"
        )
    # np.outer(v, v) is bit-exact symmetric and entrywise scale/add keep it
    # so, hence symmetry holds by induction without a transpose pass.
    # Definiteness is exact in real arithmetic (the Gram factor's eigenvalues
    # are 1 and d_t/d_hat, both positive); a factorization check is O(d^3)
    # against the O(d^2) update, so the expensive repair runs only when the
    # shrink is deep enough for rounding to threaten the smallest eigenvalue,
    # or an impossible diagonal proves rounding already broke it. Within the
    # magnitude cap, rounding noise stays around eps * cap, far below any
    # eigenvalue a moderate shrink can produce.
    if d_t < 1e-6 * d_hat or not float(np.min(diag)) > 0.0:
        new_matrix = _repair_pd(new_matrix, config.jitter)

    ctx = UpdateContext(
        violator_id=violator_id, f_hat=f_hat, f_v=-d_v, f_t=-d_t,
        loss=loss, b=b, rank=rank, applied=True, z=z,
    )
    return MetricModel(new_matrix, model.updates_applied + 1), ctx


def approx_loss_full(
    probe: Probe,
    selected_id: str,
    label: FeedbackLabel,
    gallery: Gallery,
    model_prev: MetricModel,
    model_curr: MetricModel,
    margin: float = 1.0,
) -> float:
    """Averaged squared-hinge surrogate over every violating item: the
    selected item is scored under ``model_curr`` while the competition is
    scored under ``model_prev``. Violators are the items whose hinge is
    positive under that mixed evaluation; returns 0 when there are none.
    """
    sel = gallery.item(selected_id)
    s_sel_curr = score_one(probe.feature, sel.feature, model_curr)
    scores_prev = pair_scores(probe.feature, gallery.features, model_prev)
    sel_idx = gallery.index[selected_id]
    rank = int(np.count_nonzero(scores_prev >= scores_prev[sel_idx])) - 1
    loss = rank_loss(rank, len(gallery), label)
    total = 0.0
    count = 0
    for i in range(len(gallery)):
        if i == sel_idx:
            continue
        h = hinge_violation(s_sel_curr, scores_prev[i], label, margin)
        if h > 0.0:
            total += h * h
            count += 1
    if count == 0:
        return 0.0
    return loss * total / count


# ---------------------------------------------------------------------------
# probe session loop

FeedbackSource = Callable[[int, RankedList], Optional[FeedbackEvent]]


@dataclass(frozen=True)
class RoundRecord:
    event: FeedbackEvent
    context: UpdateContext
    display_position: int  # 0-based position of the selection on screen


@dataclass
class ProbeOutcome:
    probe_id: str
    model: MetricModel
    rounds: list[RoundRecord] = field(default_factory=list)
    verified_match: Optional[str] = None  # item_id confirmed as the probe's match
    initial_rank_of_match: Optional[int] = None

    @property
    def events(self) -> list[FeedbackEvent]:
        return [r.event for r in self.rounds]


class WindowViolation(ValueError):
    """Feedback pointed at an item outside the presented window."""


def run_probe_session(
    model: MetricModel,
    probe: Probe,
    gallery: Gallery,
    feedback_source: FeedbackSource,
    config: HvilConfig = HvilConfig(),
    match_ids: Optional[frozenset[str]] = None,
) -> ProbeOutcome:
    """Drive one probe through up to ``max_rounds_per_probe`` feedback
    rounds. Each round re-ranks under the current model, asks the source
    for an event, validates it against the presented window, updates the
    model, and stops early on a TRUE_MATCH."""
    outcome = ProbeOutcome(probe_id=probe.item_id, model=model)
    for round_idx in range(config.max_rounds_per_probe):
        ranked = rank_gallery(probe, gallery, outcome.model)
        if round_idx == 0 and match_ids:
            in_list = [rank_of(ranked, m) for m in match_ids if m in ranked]
            if in_list:
                outcome.initial_rank_of_match = min(in_list)
        event = feedback_source(round_idx, ranked)
        if event is None:
            break
        pos = ranked.position_of(event.item_id)
        if pos >= config.window_k:
            raise WindowViolation(
                f"item {event.item_id!r} at position {pos} is outside the "
                f"presented window of {config.window_k}"
            )
        next_model, ctx = hvil_update(outcome.model, probe, gallery, event, config)
        outcome.model = next_model
        outcome.rounds.append(RoundRecord(event=event, context=ctx, display_position=pos))
        if event.label is FeedbackLabel.TRUE_MATCH:
            outcome.verified_match = event.item_id
            break
    return outcome


# ---------------------------------------------------------------------------
# persistence

def save_model(path: str | Path, model: MetricModel) -> None:
    """Binary layout: magic, u32 LE dim, dim*dim float64 LE row-major,
    u64 LE update counter."""
    m = np.ascontiguousarray(model.matrix, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(HVM1_MAGIC)
        fh.write(struct.pack("<I", m.shape[0]))
        fh.write(m.tobytes())
        fh.write(struct.pack("<Q", model.updates_applied))


def load_model(path: str | Path) -> MetricModel:
    with open(path, "rb") as fh:
        return _read_model_block(fh)


def _read_model_block(fh) -> MetricModel:
    magic = fh.read(4)
    if magic != HVM1_MAGIC:
        raise ValueError(f"bad model magic {magic!r}")
    (dim,) = struct.unpack("<I", fh.read(4))
    buf = fh.read(8 * dim * dim)
    if len(buf) != 8 * dim * dim:
        raise ValueError("truncated model payload")
    matrix = np.frombuffer(buf, dtype="<f8").reshape(dim, dim).copy()
    (count,) = struct.unpack("<Q", fh.read(8))
    return MetricModel(matrix, count)


def _write_model_block(fh, model: MetricModel) -> None:
    m = np.ascontiguousarray(model.matrix, dtype="<f8")
    fh.write(HVM1_MAGIC)
    fh.write(struct.pack("<I", m.shape[0]))
    fh.write(m.tobytes())
    fh.write(struct.pack("<Q", model.updates_applied))
