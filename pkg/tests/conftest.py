"""Shared fixtures: small handcrafted datasets and temp session stores."""

from __future__ import annotations

import numpy as np
import pytest

from rankloop.data import Dataset, Gallery, GalleryItem, Probe, save_dataset


def build_tiny_dataset(root=None) -> Dataset:
    """Three identities in 2-d, one probe and two gallery shots each.

    Geometry is chosen so plain L2 already ranks each probe's matches
    near, but not always at, the top: probe p0002 sits closer to
    identity c's cluster than to its own second shot.
    """
    pts = {
        "a": np.array([0.0, 0.0]),
        "b": np.array([4.0, 0.0]),
        "c": np.array([0.0, 4.0]),
    }
    probes = [
        Probe("p0000", "a", "cam0", pts["a"] + [0.1, 0.0]),
        Probe("p0001", "b", "cam0", pts["b"] + [0.0, 0.1]),
        Probe("p0002", "c", "cam0", pts["c"] + [0.0, -2.1]),
    ]
    gallery = []
    for k, (pid, base) in enumerate(sorted(pts.items())):
        gallery.append(GalleryItem(f"g{2 * k:04d}", pid, "cam1", base + [0.2, 0.1]))
        gallery.append(GalleryItem(f"g{2 * k + 1:04d}", pid, "cam1", base + [-0.1, 0.3]))
    oracle_space = {it.item_id: pts[it.person_id] for it in gallery}
    oracle_space.update({p.item_id: pts[p.person_id] for p in probes})
    return Dataset(probes=probes, gallery=Gallery(gallery),
                   oracle_space=oracle_space, root=root)


@pytest.fixture
def tiny_dataset() -> Dataset:
    return build_tiny_dataset()


@pytest.fixture
def store_root(tmp_path):
    """Session-store directory with the tiny dataset installed as 'tiny'."""
    root = tmp_path / "store"
    ds_dir = root / "datasets" / "tiny"
    ds_dir.mkdir(parents=True)
    save_dataset(build_tiny_dataset(), ds_dir)
    return root
