"""Objective evaluation: selected-patch fraction and k-NN classification error.

An individual's two objectives, both minimized:

* fraction of training patches its genome keeps, and
* one minus the support-weighted F1 obtained when each evaluation slide
  (represented by the mean of all its patches) is classified by k-NN
  against a reference library of per-slide means over selected patches.

All operations here are pure functions of immutable inputs; means and
distances accumulate in double precision.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import GenomeLayout, slide_mean_all


class CoverageViolation(Exception):
    """A genome segment has no set bit; signals an operator/repair bug."""


class LabelError(Exception):
    """A label fell outside the declared class list."""


@dataclass(frozen=True)
class FitnessPair:
    """Objective values: (selected fraction, classification error), both in [0,1]."""

    f1_fraction: float
    f2_error: float

    def astuple(self) -> tuple[float, float]:
        return (self.f1_fraction, self.f2_error)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts[true, predicted] over an ordered class list."""

    classes: tuple[str, ...]
    counts: np.ndarray  # (C, C) int64

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ReferenceLibrary:
    """One aggregated vector per represented training slide, with provenance."""

    vectors: np.ndarray  # (n, dim) float64
    labels: tuple[str, ...]
    slide_ids: tuple[str, ...]

    def __len__(self) -> int:
        return self.vectors.shape[0]


def stack_train_embeddings(train_slides) -> np.ndarray:
    """Concatenate all training patch rows into one (P, dim) float64 matrix."""
    return np.concatenate([rec.embeddings for rec in train_slides]).astype(np.float64)


def segment_popcounts(genome: np.ndarray, layout: GenomeLayout) -> np.ndarray:
    """Number of set bits in each slide segment."""
    return np.add.reduceat(genome.astype(np.int64), layout.offsets)


def aggregate_selected(genome, layout, train_slides, stacked=None) -> ReferenceLibrary:
    """Build the reference library: per-slide mean over selected patches only.

    ``stacked`` may pass a precomputed stack_train_embeddings() result so
    per-generation evaluation avoids re-concatenating the training matrix.
    """
    genome = np.asarray(genome, dtype=bool)
    if genome.shape != (layout.total_patches,):
        raise ValueError(
            f"genome length {genome.shape} does not match layout ({layout.total_patches},)"
        )
    counts = segment_popcounts(genome, layout)
    if (counts == 0).any():
        bad = int(np.flatnonzero(counts == 0)[0])
        raise CoverageViolation(
            f"segment {bad} (slide '{train_slides[bad].slide_id}') has no selected patch"
        )
    if stacked is None:
        stacked = stack_train_embeddings(train_slides)
    # Gather only the selected rows; coverage guarantees every segment
    # contributes, so the per-segment boundaries are strictly increasing.
    selected = np.flatnonzero(genome)
    boundaries = np.searchsorted(selected, layout.offsets)
    sums = np.add.reduceat(stacked[selected], boundaries, axis=0)
    vectors = sums / counts[:, None]
    return ReferenceLibrary(
        vectors=vectors,
        labels=tuple(rec.label for rec in train_slides),
        slide_ids=tuple(rec.slide_id for rec in train_slides),
    )


def knn_predict(query, library: ReferenceLibrary, k: int) -> str:
    """Majority-vote label of the k nearest library rows (squared Euclidean).

    Distance ties resolve to the lower row index; vote ties resolve to the
    label of the nearest neighbor among the tied classes.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(library) == 0:
        raise ValueError("library is empty")
    diffs = library.vectors - np.asarray(query, dtype=np.float64)
    dists = np.einsum("ij,ij->i", diffs, diffs)
    order = np.argsort(dists, kind="stable")[: min(k, len(library))]
    votes: dict[str, int] = {}
    for idx in order:
        lab = library.labels[idx]
        votes[lab] = votes.get(lab, 0) + 1
    best = max(votes.values())
    tied = {lab for lab, n in votes.items() if n == best}
    if len(tied) == 1:
        return tied.pop()
    for idx in order:
        if library.labels[idx] in tied:
            return library.labels[idx]
    raise AssertionError("unreachable: tied class must appear among neighbors")


def confusion_matrix(true_labels, predicted_labels, classes) -> ConfusionMatrix:
    """Tally counts[true, predicted]; labels must come from ``classes``."""
    if len(true_labels) != len(predicted_labels):
        raise ValueError("label lists differ in length")
    if not true_labels:
        raise ValueError("label lists are empty")
    index = {label: i for i, label in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if t not in index:
            raise LabelError(f"true label '{t}' not in class list")
        if p not in index:
            raise LabelError(f"predicted label '{p}' not in class list")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(classes=tuple(classes), counts=counts)


def weighted_f1_from_confusion(cm: ConfusionMatrix) -> float:
    """Support-weighted mean of per-class F1; zero-denominator terms are 0."""
    counts = cm.counts
    total = counts.sum()
    score = 0.0
    for c in range(len(cm.classes)):
        tp = counts[c, c]
        support = counts[c, :].sum()
        predicted = counts[:, c].sum()
        precision = tp / predicted if predicted > 0 else 0.0
        recall = tp / support if support > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        score += (support / total) * f1
    return float(score)


def weighted_f1(true_labels, predicted_labels, classes) -> float:
    """Support-weighted F1 of a prediction list against the true labels."""
    return weighted_f1_from_confusion(
        confusion_matrix(true_labels, predicted_labels, classes)
    )


class FitnessEvaluator:
    """Evaluates genomes against one fixed (train, eval) slide pairing.

    Caches the stacked training matrix, the evaluation-slide mean vectors
    (they never change within a run) and previously computed fitness pairs
    keyed by genome digest. Evaluation consumes no randomness, so results
    are identical for any worker count.
    """

    def __init__(self, layout, train_slides, eval_slides, k, classes=None):
        if not eval_slides:
            raise ValueError("eval_slides is empty")
        self.layout = layout
        self.train_slides = tuple(train_slides)
        self.eval_slides = tuple(eval_slides)
        self.k = int(k)
        if classes is None:
            classes = sorted(
                {rec.label for rec in self.train_slides}
                | {rec.label for rec in self.eval_slides}
            )
        self.classes = tuple(classes)
        self._stacked = stack_train_embeddings(self.train_slides)
        self._queries = np.stack([slide_mean_all(rec) for rec in self.eval_slides])
        self._true_labels = [rec.label for rec in self.eval_slides]
        self._cache: dict[bytes, FitnessPair] = {}

    def _digest(self, genome: np.ndarray) -> bytes:
        return hashlib.blake2b(genome.tobytes(), digest_size=16).digest()

    def evaluate_full(self, genome) -> tuple[FitnessPair, ConfusionMatrix]:
        """Both objectives plus the evaluation-split confusion matrix."""
        genome = np.asarray(genome, dtype=bool)
        library = aggregate_selected(genome, self.layout, self.train_slides, self._stacked)
        predicted = [knn_predict(q, library, self.k) for q in self._queries]
        cm = confusion_matrix(self._true_labels, predicted, self.classes)
        pair = FitnessPair(
            f1_fraction=int(genome.sum()) / self.layout.total_patches,
            f2_error=1.0 - weighted_f1_from_confusion(cm),
        )
        return pair, cm

    def evaluate(self, genome) -> FitnessPair:
        """Objectives only, with digest-keyed memoization."""
        genome = np.asarray(genome, dtype=bool)
        key = self._digest(genome)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        pair, _ = self.evaluate_full(genome)
        self._cache[key] = pair
        return pair

    def evaluate_many(self, genomes, workers=1) -> list[FitnessPair]:
        """Evaluate a batch, optionally fanning out across a thread pool."""
        genomes = list(genomes)
        if workers <= 1 or len(genomes) <= 1:
            return [self.evaluate(g) for g in genomes]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.evaluate, genomes))


def evaluate_individual(genome, layout, train_slides, eval_slides, k, classes=None):
    """One-shot evaluation of a genome: (FitnessPair, ConfusionMatrix).

    Each evaluation slide is represented by the mean of all its patches and
    classified by k-NN against the genome's selected-patch library.
    """
    evaluator = FitnessEvaluator(layout, train_slides, eval_slides, k, classes)
    return evaluator.evaluate_full(genome)
