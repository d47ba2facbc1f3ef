"""Embedding dataset: on-disk format, loading, validation, slide aggregation.

A dataset is a directory holding one JSON manifest plus one flat binary
embedding file per slide:

* ``manifest.json`` -- ``{"dim": <int>, "normalization": "raw"|..., "slides":
  [{"slide_id", "label", "split", "path", "rows"}, ...]}``. Paths are
  relative to the manifest's directory.
* embedding file -- 8-byte magic ``EVOPSEMB``, u32-LE row count, u32-LE
  dimensionality, then rows*dim IEEE-754 f32 values, little-endian,
  row-major. No padding, no trailing bytes.

Loaded datasets are immutable and safe to share across threads.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

MAGIC = b"EVOPSEMB"
HEADER = struct.Struct("<II")
SPLITS = ("train", "validation", "test")


class ManifestParseError(Exception):
    """Manifest file is missing, unreadable, or structurally invalid."""


class EmbeddingFormatError(Exception):
    """Embedding file has a bad magic, bad header, or wrong payload size."""


class ValidationError(Exception):
    """Dataset content violates an invariant; message names the slide."""


@dataclass(frozen=True)
class SlideRecord:
    """One slide: its identity, class label, split, and patch embeddings."""

    slide_id: str
    label: str
    split: str
    embeddings: np.ndarray  # (rows, dim) float32

    @property
    def rows(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class SplitDataset:
    """A validated train/validation/test cohort sharing one embedding dim.

    ``classes`` is the lexicographically sorted list of labels seen across
    all slides; it fixes confusion-matrix axes for every downstream report.
    """

    classes: tuple[str, ...]
    train: tuple[SlideRecord, ...]
    validation: tuple[SlideRecord, ...]
    test: tuple[SlideRecord, ...]
    dim: int
    normalization: str = "raw"

    @property
    def slides(self) -> tuple[SlideRecord, ...]:
        return self.train + self.validation + self.test

    def require_runnable(self) -> None:
        """Raise unless every split is non-empty (needed to optimize)."""
        for name in SPLITS:
            if not getattr(self, name):
                raise ValidationError(f"split '{name}' is empty; dataset is not runnable")

    @cached_property
    def content_hash(self) -> str:
        """Hash of all labels, splits and embedding bytes; identifies the dataset."""
        h = hashlib.sha256()
        h.update(f"dim={self.dim};norm={self.normalization}".encode())
        for rec in self.slides:
            h.update(f"{rec.slide_id}\x00{rec.label}\x00{rec.split}\x00".encode())
            h.update(np.ascontiguousarray(rec.embeddings, dtype="<f4").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class GenomeLayout:
    """Maps genome bit positions to (slide, patch) pairs.

    Training slides occupy contiguous, non-overlapping segments covering
    [0, total_patches) in training-slide order.
    """

    total_patches: int
    segments: tuple[tuple[int, int, int], ...]  # (slide_index, offset, length)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array([seg[1] for seg in self.segments], dtype=np.intp)

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.array([seg[2] for seg in self.segments], dtype=np.intp)

    @property
    def n_slides(self) -> int:
        return len(self.segments)


def build_layout(train_slides) -> GenomeLayout:
    """Assign each training slide a contiguous genome segment, in order."""
    if not train_slides:
        raise ValidationError("cannot build a genome layout from an empty train split")
    segments = []
    offset = 0
    for i, rec in enumerate(train_slides):
        segments.append((i, offset, rec.rows))
        offset += rec.rows
    return GenomeLayout(total_patches=offset, segments=tuple(segments))


def slide_mean_all(slide: SlideRecord) -> np.ndarray:
    """Mean over every patch row, accumulated in double precision."""
    return slide.embeddings.mean(axis=0, dtype=np.float64)


def read_embedding_file(path) -> np.ndarray:
    """Read one binary embedding file into a (rows, dim) float32 array."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise EmbeddingFormatError(f"{path}: cannot read embedding file: {exc}") from exc
    if len(data) < len(MAGIC) + HEADER.size:
        raise EmbeddingFormatError(f"{path}: file too short for magic and header")
    if data[: len(MAGIC)] != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {data[:len(MAGIC)]!r}")
    rows, dim = HEADER.unpack_from(data, len(MAGIC))
    expected = len(MAGIC) + HEADER.size + rows * dim * 4
    if len(data) < expected:
        raise EmbeddingFormatError(
            f"{path}: truncated payload ({len(data)} bytes, expected {expected})"
        )
    if len(data) > expected:
        raise EmbeddingFormatError(
            f"{path}: trailing bytes ({len(data)} bytes, expected {expected})"
        )
    values = np.frombuffer(data, dtype="<f4", offset=len(MAGIC) + HEADER.size)
    return values.reshape(rows, dim).astype(np.float32)


def write_embedding_file(path, embeddings: np.ndarray) -> None:
    """Write a (rows, dim) array as one binary embedding file."""
    arr = np.ascontiguousarray(embeddings, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"embeddings must be 2-D, got shape {arr.shape}")
    rows, dim = arr.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(HEADER.pack(rows, dim))
        fh.write(arr.tobytes())


def _manifest_path(path) -> Path:
    path = Path(path)
    return path / "manifest.json" if path.is_dir() else path


def load_dataset(manifest_path) -> SplitDataset:
    """Load and validate a dataset from a manifest file (or its directory).

    Rejects dimension mismatches, empty slides, non-finite values and
    duplicate slide ids; every error message names the offending slide.
    """
    manifest_path = _manifest_path(manifest_path)
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise ManifestParseError(f"{manifest_path}: cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{manifest_path}: invalid JSON: {exc}") from exc

    if not isinstance(manifest, dict):
        raise ManifestParseError(f"{manifest_path}: manifest must be a JSON object")
    try:
        dim = manifest["dim"]
        entries = manifest["slides"]
    except KeyError as exc:
        raise ManifestParseError(f"{manifest_path}: missing manifest key {exc}") from exc
    if not isinstance(dim, int) or dim < 1:
        raise ManifestParseError(f"{manifest_path}: 'dim' must be a positive integer")
    if not isinstance(entries, list) or not entries:
        raise ManifestParseError(f"{manifest_path}: 'slides' must be a non-empty array")
    normalization = manifest.get("normalization", "raw")
    if not isinstance(normalization, str):
        raise ManifestParseError(f"{manifest_path}: 'normalization' must be a string")

    base = manifest_path.parent
    seen_ids: set[str] = set()
    by_split: dict[str, list[SlideRecord]] = {name: [] for name in SPLITS}
    for entry in entries:
        if not isinstance(entry, dict):
            raise ManifestParseError(f"{manifest_path}: slide entries must be objects")
        try:
            slide_id = entry["slide_id"]
            label = entry["label"]
            split = entry["split"]
            rel_path = entry["path"]
            rows = entry["rows"]
        except KeyError as exc:
            raise ManifestParseError(
                f"{manifest_path}: slide entry missing key {exc}"
            ) from exc
        if not all(isinstance(v, str) for v in (slide_id, label, split, rel_path)):
            raise ManifestParseError(
                f"{manifest_path}: slide_id/label/split/path must be strings"
            )
        if split not in SPLITS:
            raise ValidationError(f"slide '{slide_id}': unknown split '{split}'")
        if slide_id in seen_ids:
            raise ValidationError(f"slide '{slide_id}': duplicate slide_id")
        seen_ids.add(slide_id)

        embeddings = read_embedding_file(base / rel_path)
        if embeddings.shape[0] != rows:
            raise ValidationError(
                f"slide '{slide_id}': manifest declares {rows} rows, "
                f"file holds {embeddings.shape[0]}"
            )
        if embeddings.shape[0] < 1:
            raise ValidationError(f"slide '{slide_id}': slide has zero patches")
        if embeddings.shape[1] != dim:
            raise ValidationError(
                f"slide '{slide_id}': embedding dim {embeddings.shape[1]} "
                f"does not match dataset dim {dim}"
            )
        if not np.isfinite(embeddings).all():
            raise ValidationError(f"slide '{slide_id}': non-finite embedding values")
        embeddings.setflags(write=False)
        by_split[split].append(
            SlideRecord(slide_id=slide_id, label=label, split=split, embeddings=embeddings)
        )

    classes = tuple(sorted({rec.label for recs in by_split.values() for rec in recs}))
    return SplitDataset(
        classes=classes,
        train=tuple(by_split["train"]),
        validation=tuple(by_split["validation"]),
        test=tuple(by_split["test"]),
        dim=dim,
        normalization=normalization,
    )


def write_dataset(dataset: SplitDataset, out_dir) -> Path:
    """Write manifest plus one embedding file per slide; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in dataset.slides:
        filename = f"{rec.slide_id}.emb"
        write_embedding_file(out_dir / filename, rec.embeddings)
        entries.append(
            {
                "slide_id": rec.slide_id,
                "label": rec.label,
                "split": rec.split,
                "path": filename,
                "rows": rec.rows,
            }
        )
    manifest = {
        "dim": dataset.dim,
        "normalization": dataset.normalization,
        "slides": entries,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest_path


def make_dataset(train, validation, test, normalization="raw") -> SplitDataset:
    """Assemble and validate a SplitDataset from in-memory slide records."""
    slides = list(train) + list(validation) + list(test)
    if not slides:
        raise ValidationError("dataset has no slides")
    dim = slides[0].dim
    seen: set[str] = set()
    for rec in slides:
        if rec.rows < 1:
            raise ValidationError(f"slide '{rec.slide_id}': slide has zero patches")
        if rec.dim != dim:
            raise ValidationError(
                f"slide '{rec.slide_id}': embedding dim {rec.dim} "
                f"does not match dataset dim {dim}"
            )
        if not np.isfinite(rec.embeddings).all():
            raise ValidationError(f"slide '{rec.slide_id}': non-finite embedding values")
        if rec.slide_id in seen:
            raise ValidationError(f"slide '{rec.slide_id}': duplicate slide_id")
        seen.add(rec.slide_id)
    classes = tuple(sorted({rec.label for rec in slides}))
    return SplitDataset(
        classes=classes,
        train=tuple(train),
        validation=tuple(validation),
        test=tuple(test),
        dim=dim,
        normalization=normalization,
    )
