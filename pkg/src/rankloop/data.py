"""Data model and on-disk formats for ranked-search experiments.

Items are feature vectors labelled with an identity and a capture view.
Probes are queries; the gallery is the search pool. Features travel
either as a compact binary table (magic ``RFV1``) or as plain CSV, and
item metadata is always CSV with a fixed header.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

RFV1_MAGIC = b"RFV1"
META_HEADER = ["item_id", "person_id", "camera_id", "role", "image_ref"]
ROLES = ("probe", "gallery")


class DataFormatError(ValueError):
    """Raised when an input file violates the dataset contract."""


class FeedbackLabel(str, Enum):
    """Annotator verdict on a selected gallery item."""

    TRUE_MATCH = "true_match"
    STRONG_NEGATIVE = "strong_negative"


@dataclass(frozen=True)
class Probe:
    """A query instance: one feature vector plus identity metadata."""

    item_id: str
    person_id: str
    camera_id: str
    feature: np.ndarray
    image_ref: str = ""


@dataclass(frozen=True)
class GalleryItem:
    """A search-pool instance. ``feature`` rows are owned by the Gallery."""

    item_id: str
    person_id: str
    camera_id: str
    feature: np.ndarray
    image_ref: str = ""


def feature_digest(feature: np.ndarray) -> str:
    """Short stable hash of a feature vector. Display layers use it to
    draw a deterministic glyph for items that carry no image, so the
    same item looks the same everywhere without shipping the vector."""
    payload = np.ascontiguousarray(feature, dtype="<f8").tobytes()
    return hashlib.sha1(payload).hexdigest()[:12]


@dataclass(frozen=True)
class FeedbackEvent:
    """One annotator action on a displayed ranking.

    ``rank_at_selection`` is the selected item's tie-aware rank (count of
    other gallery items scoring at or above it) under the model that was
    on screen. ``wall_time`` is seconds; simulated sessions stamp it from
    a deterministic virtual clock so replays are byte-identical.
    """

    probe_id: str
    item_id: str
    label: FeedbackLabel
    rank_at_selection: int
    wall_time: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "probe_id": self.probe_id,
                "item_id": self.item_id,
                "label": self.label.value,
                "rank_at_selection": self.rank_at_selection,
                "wall_time": self.wall_time,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(line: str) -> "FeedbackEvent":
        raw = json.loads(line)
        return FeedbackEvent(
            probe_id=raw["probe_id"],
            item_id=raw["item_id"],
            label=FeedbackLabel(raw["label"]),
            rank_at_selection=int(raw["rank_at_selection"]),
            wall_time=float(raw["wall_time"]),
        )


class Gallery:
    """Search pool with a stacked feature matrix for vectorised scoring."""

    def __init__(self, items: Sequence[GalleryItem]):
        if not items:
            raise DataFormatError("gallery must contain at least one item")
        seen: set[str] = set()
        for it in items:
            if it.item_id in seen:
                raise DataFormatError(f"duplicate gallery item_id {it.item_id!r}")
            seen.add(it.item_id)
        dim = items[0].feature.shape[0]
        feats = np.empty((len(items), dim), dtype=np.float64)
        for i, it in enumerate(items):
            f = np.asarray(it.feature, dtype=np.float64)
            if f.shape != (dim,):
                raise DataFormatError(
                    f"item {it.item_id!r} has dim {f.shape}, expected ({dim},)"
                )
            feats[i] = f
        if not np.all(np.isfinite(feats)):
            raise DataFormatError("gallery features contain NaN or Inf")
        feats.setflags(write=False)
        self.items: tuple[GalleryItem, ...] = tuple(
            GalleryItem(it.item_id, it.person_id, it.camera_id, feats[i], it.image_ref)
            for i, it in enumerate(items)
        )
        self.features = feats
        self.ids: tuple[str, ...] = tuple(it.item_id for it in self.items)
        self.index: dict[str, int] = {iid: i for i, iid in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.items)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def item(self, item_id: str) -> GalleryItem:
        return self.items[self.index[item_id]]

    def matches_of(self, person_id: str) -> frozenset[str]:
        return frozenset(it.item_id for it in self.items if it.person_id == person_id)


@dataclass
class Dataset:
    """Probes plus gallery, with optional latent coordinates for oracles.

    ``oracle_space`` maps item_id to its generator-side latent vector; it
    exists only for synthetic data and is what simulated annotators use
    to judge how dissimilar a wrong item really is.
    """

    probes: list[Probe]
    gallery: Gallery
    oracle_space: dict[str, np.ndarray] = field(default_factory=dict)
    root: Path | None = None

    @property
    def dim(self) -> int:
        return self.gallery.dim

    def matches_of(self, probe: Probe) -> frozenset[str]:
        return self.gallery.matches_of(probe.person_id)


# ---------------------------------------------------------------------------
# feature tables

def write_rfv1(path: str | Path, ids: Sequence[str], matrix: np.ndarray) -> None:
    """Write a binary feature table: magic, u32 dim, u64 count, then
    one record per row (u32 id length, UTF-8 id, dim float32 LE)."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or len(ids) != matrix.shape[0]:
        raise DataFormatError("ids and matrix rows must align")
    dim = matrix.shape[1]
    with open(path, "wb") as fh:
        fh.write(RFV1_MAGIC)
        fh.write(struct.pack("<I", dim))
        fh.write(struct.pack("<Q", len(ids)))
        for iid, row in zip(ids, matrix):
            raw = iid.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(np.asarray(row, dtype="<f4").tobytes())


def read_rfv1(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read an RFV1 table. Returns ids and a float64 matrix (values are
    exactly the stored float32s)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != RFV1_MAGIC:
            raise DataFormatError(f"bad magic {magic!r}, expected {RFV1_MAGIC!r}")
        (dim,) = struct.unpack("<I", fh.read(4))
        (count,) = struct.unpack("<Q", fh.read(8))
        ids: list[str] = []
        rows = np.empty((count, dim), dtype=np.float64)
        rec = 4 * dim
        for i in range(count):
            head = fh.read(4)
            if len(head) != 4:
                raise DataFormatError(f"truncated record header at row {i}")
            (n,) = struct.unpack("<I", head)
            iid = fh.read(n).decode("utf-8")
            buf = fh.read(rec)
            if len(buf) != rec:
                raise DataFormatError(f"truncated feature payload for {iid!r}")
            rows[i] = np.frombuffer(buf, dtype="<f4")
            ids.append(iid)
        if fh.read(1):
            raise DataFormatError("trailing bytes after final record")
    _check_unique(ids)
    return ids, rows


def write_features_csv(path: str | Path, ids: Sequence[str], matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix)
    dim = matrix.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id"] + [f"v{i+1}" for i in range(dim)])
        for iid, row in zip(ids, matrix):
            writer.writerow([iid] + [repr(float(v)) for v in row])


def read_features_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "item_id":
            raise DataFormatError("feature CSV must start with an item_id column")
        dim = len(header) - 1
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dim + 1:
                raise DataFormatError(f"row {lineno}: expected {dim + 1} fields")
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataFormatError(f"row {lineno}: {exc}") from exc
    _check_unique(ids)
    return ids, np.asarray(rows, dtype=np.float64)


def _check_unique(ids: Sequence[str]) -> None:
    if len(set(ids)) != len(ids):
        raise DataFormatError("duplicate item_id in feature table")


# ---------------------------------------------------------------------------
# metadata

def write_metadata_csv(path: str | Path, rows: Iterable[Mapping[str, str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=META_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in META_HEADER})


def read_metadata_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != META_HEADER:
            raise DataFormatError(
                f"metadata header must be {','.join(META_HEADER)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if row["role"] not in ROLES:
                raise DataFormatError(
                    f"row {lineno}: role {row['role']!r} not in {ROLES}"
                )
            if not row["item_id"]:
                raise DataFormatError(f"row {lineno}: empty item_id")
            rows.append(dict(row))
    ids = [r["item_id"] for r in rows]
    if len(set(ids)) != len(ids):
        raise DataFormatError("duplicate item_id in metadata")
    return rows


# ---------------------------------------------------------------------------
# dataset directory

def load_dataset(root: str | Path, normalize: bool = False) -> Dataset:
    """Load ``meta.csv`` plus ``features.rfv`` (or ``features.csv``) from a
    directory; ``oracle_space.rfv`` is attached when present. With
    ``normalize`` every feature is scaled to unit Euclidean norm."""
    root = Path(root)
    meta = read_metadata_csv(root / "meta.csv")
    if (root / "features.rfv").exists():
        ids, feats = read_rfv1(root / "features.rfv")
    elif (root / "features.csv").exists():
        ids, feats = read_features_csv(root / "features.csv")
    else:
        raise DataFormatError(f"no features.rfv or features.csv under {root}")
    if normalize:
        norms = np.linalg.norm(feats, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise DataFormatError("cannot normalize a zero feature vector")
        feats = feats / norms
    table = {iid: feats[i] for i, iid in enumerate(ids)}
    missing = [r["item_id"] for r in meta if r["item_id"] not in table]
    if missing:
        raise DataFormatError(f"metadata items missing features: {missing[:5]}")
    extra = set(table) - {r["item_id"] for r in meta}
    if extra:
        raise DataFormatError(f"features present for unknown items: {sorted(extra)[:5]}")
    if not np.all(np.isfinite(feats)):
        raise DataFormatError("features contain NaN or Inf")

    probes: list[Probe] = []
    gallery_items: list[GalleryItem] = []
    for r in meta:
        f = table[r["item_id"]]
        if r["role"] == "probe":
            probes.append(Probe(r["item_id"], r["person_id"], r["camera_id"], f, r["image_ref"]))
        else:
            gallery_items.append(
                GalleryItem(r["item_id"], r["person_id"], r["camera_id"], f, r["image_ref"])
            )
    if not gallery_items:
        raise DataFormatError("dataset has an empty gallery")

    oracle_space: dict[str, np.ndarray] = {}
    if (root / "oracle_space.rfv").exists():
        oids, ovecs = read_rfv1(root / "oracle_space.rfv")
        oracle_space = {iid: ovecs[i] for i, iid in enumerate(oids)}
    return Dataset(probes=probes, gallery=Gallery(gallery_items), oracle_space=oracle_space, root=root)


def save_dataset(ds: Dataset, root: str | Path) -> Path:
    """Write a dataset directory in the canonical layout."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    ids: list[str] = []
    feats: list[np.ndarray] = []
    for p in ds.probes:
        rows.append(
            {"item_id": p.item_id, "person_id": p.person_id, "camera_id": p.camera_id,
             "role": "probe", "image_ref": p.image_ref}
        )
        ids.append(p.item_id)
        feats.append(p.feature)
    for g in ds.gallery.items:
        rows.append(
            {"item_id": g.item_id, "person_id": g.person_id, "camera_id": g.camera_id,
             "role": "gallery", "image_ref": g.image_ref}
        )
        ids.append(g.item_id)
        feats.append(g.feature)
    write_metadata_csv(root / "meta.csv", rows)
    write_rfv1(root / "features.rfv", ids, np.vstack(feats))
    if ds.oracle_space:
        oids = [i for i in ids if i in ds.oracle_space]
        write_rfv1(root / "oracle_space.rfv", oids, np.vstack([ds.oracle_space[i] for i in oids]))
    return root


def write_events_jsonl(path: str | Path, events: Iterable[FeedbackEvent]) -> None:
    with open(path, "w") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")


def append_event_jsonl(path: str | Path, event: FeedbackEvent) -> None:
    with open(path, "a") as fh:
        fh.write(event.to_json() + "\n")


def read_events_jsonl(path: str | Path) -> list[FeedbackEvent]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(FeedbackEvent.from_json(line))
    return out
