"""Ensemble ranking over a series of per-session metric models.

Each feedback session leaves behind one weak metric. A probe/gallery
pair is summarised by its vector of squared distances under every weak
metric, and the ensemble scores the pair as -(d' W d) with a PSD weight
matrix W. W is fit by projected gradient descent against ideal scores
(0 for same identity, -1 otherwise) built from the pairs annotators
actually verified, with a pull-together regulariser on same-identity
scores.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Gallery, Probe
from .hvil import HVM1_MAGIC, MetricModel, _read_model_block, _write_model_block
from .ranking import RankedList, order_by_score

RME1_MAGIC = b"RME1"

SAME_IDENTITY_SCORE = 0.0
DIFFERENT_IDENTITY_SCORE = -1.0


@dataclass(frozen=True)
class RmelConfig:
    nu: float = 0.1
    step: float = 1e-3
    max_iters: int = 200
    tol: float = 1e-8
    init: str = "identity"  # "identity" or "random_psd"
    seed: int = 0

    def __post_init__(self):
        if self.init not in ("identity", "random_psd"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.step <= 0 or self.max_iters < 1:
            raise ValueError("step must be positive and max_iters at least 1")


@dataclass
class EnsembleModel:
    """PSD pair-weight matrix over ``len(weak_models)`` weak metrics."""

    weights: np.ndarray
    weak_models: list[MetricModel]

    @property
    def size(self) -> int:
        return len(self.weak_models)

    def validate(self, atol: float = 1e-8) -> None:
        w = self.weights
        if w.shape != (self.size, self.size):
            raise ValueError(f"weights {w.shape} do not match {self.size} weak models")
        if not np.allclose(w, w.T, atol=atol, rtol=0.0):
            raise ValueError("weights are not symmetric")
        eigs = np.linalg.eigvalsh((w + w.T) / 2.0)
        if eigs.min() < -atol:
            raise ValueError(f"weights are not PSD (min eigenvalue {eigs.min():.3e})")


def ideal_score(same_identity: bool) -> float:
    return SAME_IDENTITY_SCORE if same_identity else DIFFERENT_IDENTITY_SCORE


def distance_vector(
    probe_feature: np.ndarray,
    gallery_feature: np.ndarray,
    weak_models: Sequence[MetricModel],
) -> np.ndarray:
    """Squared distance of one pair under each weak metric; entries are
    clamped at zero to absorb round-off from the PSD matrices."""
    z = np.asarray(probe_feature, dtype=np.float64) - np.asarray(gallery_feature, dtype=np.float64)
    out = np.array([float(z @ (m.matrix @ z)) for m in weak_models])
    return np.maximum(out, 0.0)


def distance_matrix(
    probe_features: np.ndarray,
    gallery_features: np.ndarray,
    weak_models: Sequence[MetricModel],
) -> np.ndarray:
    """(n_probes, n_gallery, n_models) squared distances, computed via
    the quadratic expansion p'Mp - 2 p'Mg + g'Mg per weak metric."""
    p = np.asarray(probe_features, dtype=np.float64)
    g = np.asarray(gallery_features, dtype=np.float64)
    out = np.empty((p.shape[0], g.shape[0], len(weak_models)))
    for t, model in enumerate(weak_models):
        pm = p @ model.matrix
        gm = g @ model.matrix
        pp = np.einsum("ij,ij->i", pm, p)
        gg = np.einsum("ij,ij->i", gm, g)
        out[:, :, t] = pp[:, None] - 2.0 * (pm @ g.T) + gg[None, :]
    return np.maximum(out, 0.0)


def ensemble_score(d_vec: np.ndarray, weights: np.ndarray) -> float:
    d = np.asarray(d_vec, dtype=np.float64)
    return float(-(d @ (weights @ d)))


def ensemble_scores(d_rows: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Scores for stacked distance vectors, one row per pair."""
    d = np.atleast_2d(np.asarray(d_rows, dtype=np.float64))
    return -np.einsum("ij,ij->i", d @ weights, d)


def rmel_objective(d_rows: np.ndarray, same: np.ndarray, weights: np.ndarray, nu: float) -> float:
    """Squared residual to the ideal score table plus nu times the
    pull-together penalty (negated same-identity ensemble scores)."""
    scores = ensemble_scores(d_rows, weights)
    same = np.asarray(same, dtype=bool)
    ideal = np.where(same, SAME_IDENTITY_SCORE, DIFFERENT_IDENTITY_SCORE)
    resid = scores - ideal
    return float(resid @ resid + nu * -(scores[same].sum()))


def rmel_gradient(d_rows: np.ndarray, same: np.ndarray, weights: np.ndarray, nu: float) -> np.ndarray:
    """Exact gradient of ``rmel_objective`` in W: for each pair the
    outer product d d' scaled by 2*(ideal - score) + nu*[same]."""
    d = np.atleast_2d(np.asarray(d_rows, dtype=np.float64))
    same = np.asarray(same, dtype=bool)
    scores = ensemble_scores(d, weights)
    ideal = np.where(same, SAME_IDENTITY_SCORE, DIFFERENT_IDENTITY_SCORE)
    coeff = 2.0 * (ideal - scores) + nu * same.astype(np.float64)
    grad = d.T @ (coeff[:, None] * d)
    return (grad + grad.T) / 2.0


def project_psd(matrix: np.ndarray) -> np.ndarray:
    """Clamp negative eigenvalues of the symmetrised matrix to zero."""
    sym = (matrix + matrix.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, 0.0)
    return (vecs * vals) @ vecs.T


@dataclass
class RmelTrainResult:
    weights: np.ndarray
    objective_initial: float
    objective_final: float
    objective_history: list[float]
    iterations: int


def train_rmel(d_rows: np.ndarray, same: np.ndarray, config: RmelConfig = RmelConfig()) -> RmelTrainResult:
    """Fixed-step projected gradient descent on the ensemble objective.

    Every iterate is projected back to the PSD cone by eigenvalue
    clamping. The best iterate seen is returned, which keeps the final
    objective at or below the initial one even if a late fixed step
    overshoots. Stops early once the improvement falls below ``tol``.
    """
    d = np.atleast_2d(np.asarray(d_rows, dtype=np.float64))
    same = np.asarray(same, dtype=bool)
    if same.shape[0] != d.shape[0]:
        raise ValueError("same-identity mask must align with the pair rows")
    if same.all():
        raise ValueError(
            "degenerate training set: every pair shares one identity, so "
            "there are no negative pairs to separate"
        )
    tau = d.shape[1]
    if config.init == "identity":
        w = np.eye(tau)
    else:
        rng = np.random.default_rng(config.seed)
        a = rng.normal(size=(tau, tau))
        w = a.T @ a / tau
    obj = rmel_objective(d, same, w, config.nu)
    history = [obj]
    best_w, best_obj = w.copy(), obj
    iters = 0
    for iters in range(1, config.max_iters + 1):
        w = project_psd(w - config.step * rmel_gradient(d, same, w, config.nu))
        obj = rmel_objective(d, same, w, config.nu)
        history.append(obj)
        if obj < best_obj:
            best_obj, best_w = obj, w.copy()
        if abs(history[-2] - obj) < config.tol:
            break
    return RmelTrainResult(
        weights=best_w,
        objective_initial=history[0],
        objective_final=best_obj,
        objective_history=history,
        iterations=iters,
    )


def build_training_pairs(
    probe_features: np.ndarray,
    probe_persons: Sequence[str],
    gallery_features: np.ndarray,
    gallery_persons: Sequence[str],
    weak_models: Sequence[MetricModel],
) -> tuple[np.ndarray, np.ndarray]:
    """All ordered verified-probe x verified-gallery pairs as stacked
    distance vectors plus the same-identity mask."""
    cube = distance_matrix(probe_features, gallery_features, weak_models)
    n_p, n_g, tau = cube.shape
    d_rows = cube.reshape(n_p * n_g, tau)
    same = np.equal.outer(np.asarray(probe_persons, dtype=object),
                          np.asarray(gallery_persons, dtype=object)).reshape(-1)
    return d_rows, same.astype(bool)


def average_ensemble(weak_models: Sequence[MetricModel]) -> MetricModel:
    """Element-wise mean of the weak metrics; the simplest consensus."""
    if not weak_models:
        raise ValueError("cannot average an empty model series")
    stack = np.stack([m.matrix for m in weak_models])
    return MetricModel(stack.mean(axis=0), sum(m.updates_applied for m in weak_models))


def hol_rank(probe: Probe, gallery: Gallery, ensemble: EnsembleModel) -> RankedList:
    """Rank a gallery for one probe under the ensemble score, with the
    same tie handling as single-metric ranking."""
    cube = distance_matrix(probe.feature[None, :], gallery.features, ensemble.weak_models)
    scores = ensemble_scores(cube[0], ensemble.weights)
    order = order_by_score(gallery.ids, scores)
    return RankedList(tuple(gallery.ids[i] for i in order), scores[order])


def hol_scores(
    probe_features: np.ndarray,
    gallery_features: np.ndarray,
    ensemble: EnsembleModel,
) -> np.ndarray:
    """(n_probes, n_gallery) ensemble scores in one shot."""
    cube = distance_matrix(probe_features, gallery_features, ensemble.weak_models)
    n_p, n_g, tau = cube.shape
    flat = cube.reshape(n_p * n_g, tau)
    return ensemble_scores(flat, ensemble.weights).reshape(n_p, n_g)


# ---------------------------------------------------------------------------
# persistence

def save_ensemble(path: str | Path, ensemble: EnsembleModel) -> None:
    """Binary layout: magic, u32 LE model count, count*count float64 LE
    weights, then the weak models as embedded model blocks."""
    w = np.ascontiguousarray(ensemble.weights, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(RME1_MAGIC)
        fh.write(struct.pack("<I", ensemble.size))
        fh.write(w.tobytes())
        for m in ensemble.weak_models:
            _write_model_block(fh, m)


def load_ensemble(path: str | Path) -> EnsembleModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != RME1_MAGIC:
            raise ValueError(f"bad ensemble magic {magic!r}")
        (tau,) = struct.unpack("<I", fh.read(4))
        buf = fh.read(8 * tau * tau)
        if len(buf) != 8 * tau * tau:
            raise ValueError("truncated ensemble weights")
        weights = np.frombuffer(buf, dtype="<f8").reshape(tau, tau).copy()
        weak = [_read_model_block(fh) for _ in range(tau)]
    return EnsembleModel(weights=weights, weak_models=weak)
