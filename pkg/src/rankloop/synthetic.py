"""Two-view synthetic identity data with a retained ground-truth space.

Identities are Gaussian centroids in a latent space. Each identity is
observed once per view with per-dimension latent noise (a linear noise
profile, so some dimensions are informative and others are not); the
gallery view is additionally pushed through a fixed low-rank linear
distortion. Both effects make a plain L2 ranking mediocre while leaving
structure a learned metric can exploit. Latent coordinates are kept
alongside the features so simulated annotators can judge dissimilarity
in the space that actually defines identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Gallery, GalleryItem, Probe


@dataclass(frozen=True)
class SyntheticSpec:
    n_identities: int = 300
    dim: int = 64
    sigma_min: float = 0.0
    sigma_max: float = 0.0
    view_skew: float = 0.0
    skew_rank: int = 8
    normalize: bool = True

    def __post_init__(self):
        if self.n_identities < 2 or self.dim < 2:
            raise ValueError("need at least 2 identities and 2 dimensions")
        if self.sigma_min < 0 or self.sigma_max < self.sigma_min:
            raise ValueError("sigma bounds must satisfy 0 <= sigma_min <= sigma_max")
        if self.view_skew < 0:
            raise ValueError("view_skew must be non-negative")
        if not 1 <= self.skew_rank <= self.dim:
            raise ValueError("skew_rank must lie in [1, dim]")


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return x / norms


def gen_synthetic(spec: SyntheticSpec, seed: int = 0) -> Dataset:
    """One probe and one gallery item per identity (single-shot, two
    views). Deterministic given (spec, seed)."""
    rng = np.random.default_rng(seed)
    n, d = spec.n_identities, spec.dim
    centroids = rng.normal(size=(n, d))
    sigma = np.linspace(spec.sigma_min, spec.sigma_max, d)

    latent_probe = centroids + sigma * rng.normal(size=(n, d))
    latent_gallery = centroids + sigma * rng.normal(size=(n, d))

    if spec.view_skew > 0.0:
        a = rng.normal(size=(d, spec.skew_rank))
        b = rng.normal(size=(spec.skew_rank, d))
        skew = a @ b
        skew /= np.linalg.norm(skew, 2)
        view_b = np.eye(d) + spec.view_skew * skew
    else:
        view_b = np.eye(d)

    feat_probe = latent_probe
    feat_gallery = latent_gallery @ view_b.T
    if spec.normalize:
        feat_probe = _unit_rows(feat_probe)
        feat_gallery = _unit_rows(feat_gallery)

    probes: list[Probe] = []
    items: list[GalleryItem] = []
    oracle_space: dict[str, np.ndarray] = {}
    for i in range(n):
        person = f"id{i:04d}"
        pid, gid = f"p{i:04d}", f"g{i:04d}"
        probes.append(Probe(pid, person, "camA", feat_probe[i]))
        items.append(GalleryItem(gid, person, "camB", feat_gallery[i]))
        oracle_space[pid] = latent_probe[i]
        oracle_space[gid] = latent_gallery[i]
    return Dataset(probes=probes, gallery=Gallery(items), oracle_space=oracle_space)
