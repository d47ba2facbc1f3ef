"""Final-front extraction, held-out scoring, multi-seed aggregation, export.

After the generational loop finishes, the rank-0 solutions are re-scored on
the validation and test splits, the best-by-validation and best-by-test
solutions are identified, and everything is written out as CSV/JSON for
downstream tooling (no plotting here).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import GenomeLayout, SplitDataset, build_layout
from .evolution import EvolutionConfig, GenerationTrace, fast_non_dominated_sort
from .fitness import ConfusionMatrix, evaluate_individual

CSV_FLOAT_FMT = "%.6f"


class MixedDatasetError(Exception):
    """Run reports being aggregated disagree on dataset identity."""


@dataclass
class FrontSolution:
    """One Pareto-front member scored on both held-out splits."""

    genome: np.ndarray
    patch_count: int
    f1_fraction: float
    validation_f1: float
    test_f1: float
    validation_confusion: ConfusionMatrix
    test_confusion: ConfusionMatrix
    per_slide_counts: dict[str, int]


@dataclass
class BaselineReport:
    """All-ones-genome scores: the no-selection reference point."""

    patch_count: int
    validation_f1: float
    test_f1: float
    validation_confusion: ConfusionMatrix
    test_confusion: ConfusionMatrix


@dataclass
class RunReport:
    """Everything one seeded run produced, ready for export/aggregation."""

    config: EvolutionConfig
    dataset_hash: str
    baseline: BaselineReport
    front: list[FrontSolution]
    best_val: int
    best_test: int
    traces: list[GenerationTrace]
    reduction_best_val: float
    reduction_best_test: float
    total_patches: int
    per_class_patches_per_slide: dict[str, float]
    layout: GenomeLayout
    train_slide_ids: list[str]


@dataclass
class AggregateReport:
    """Mean/std over seeded runs of the headline per-run numbers."""

    runs: int
    seeds: list[int]
    dataset_hash: str
    baseline: dict
    best_val: dict
    best_test: dict
    per_class_patches_per_slide: dict[str, float]


def extract_front(population) -> list:
    """Rank-0 individuals, deduplicated by fitness pair, by ascending fraction.

    Duplicate (f1_fraction, f2_error) pairs keep the lowest-index
    representative; the survivors form a strict trade-off curve.
    """
    fronts = fast_non_dominated_sort(population)
    seen: set[tuple[float, float]] = set()
    unique = []
    for i in fronts[0]:
        key = population[i].fitness.astuple()
        if key not in seen:
            seen.add(key)
            unique.append(population[i])
    unique.sort(key=lambda ind: ind.fitness.f1_fraction)
    return unique


def _score_split(genome, layout, dataset, eval_slides, k):
    pair, cm = evaluate_individual(
        genome, layout, dataset.train, eval_slides, k, classes=dataset.classes
    )
    return 1.0 - pair.f2_error, pair, cm


def evaluate_front(front, dataset: SplitDataset, k) -> list[FrontSolution]:
    """Score every front member on the validation and test splits."""
    if not front:
        raise ValueError("front is empty")
    dataset.require_runnable()
    layout = build_layout(dataset.train)
    solutions = []
    for ind in front:
        genome = np.asarray(ind.genome, dtype=bool)
        val_f1, pair, val_cm = _score_split(genome, layout, dataset, dataset.validation, k)
        test_f1, _, test_cm = _score_split(genome, layout, dataset, dataset.test, k)
        counts = {
            rec.slide_id: int(genome[off : off + length].sum())
            for rec, (_, off, length) in zip(dataset.train, layout.segments)
        }
        solutions.append(
            FrontSolution(
                genome=genome,
                patch_count=int(genome.sum()),
                f1_fraction=pair.f1_fraction,
                validation_f1=val_f1,
                test_f1=test_f1,
                validation_confusion=val_cm,
                test_confusion=test_cm,
                per_slide_counts=counts,
            )
        )
    return solutions


def compute_baseline(dataset: SplitDataset, k) -> BaselineReport:
    """Score the all-ones genome (every training patch retained)."""
    dataset.require_runnable()
    layout = build_layout(dataset.train)
    genome = np.ones(layout.total_patches, dtype=bool)
    val_f1, _, val_cm = _score_split(genome, layout, dataset, dataset.validation, k)
    test_f1, _, test_cm = _score_split(genome, layout, dataset, dataset.test, k)
    return BaselineReport(
        patch_count=layout.total_patches,
        validation_f1=val_f1,
        test_f1=test_f1,
        validation_confusion=val_cm,
        test_confusion=test_cm,
    )


def _argbest(front, key) -> int:
    """Index maximizing key; ties prefer smaller patch_count, then lower index."""
    best = 0
    for i in range(1, len(front)):
        better = key(front[i]) > key(front[best])
        tie_smaller = (
            key(front[i]) == key(front[best])
            and front[i].patch_count < front[best].patch_count
        )
        if better or tie_smaller:
            best = i
    return best


def build_report(dataset, config, population, traces) -> RunReport:
    """Assemble a RunReport from a finished run's population and traces."""
    layout = build_layout(dataset.train)
    front = evaluate_front(extract_front(population), dataset, config.k_neighbors)
    baseline = compute_baseline(dataset, config.k_neighbors)
    best_val = _argbest(front, lambda s: s.validation_f1)
    best_test = _argbest(front, lambda s: s.test_f1)
    total = layout.total_patches

    label_by_slide = {rec.slide_id: rec.label for rec in dataset.train}
    per_class: dict[str, list[int]] = {}
    for slide_id, count in front[best_val].per_slide_counts.items():
        per_class.setdefault(label_by_slide[slide_id], []).append(count)
    per_class_mean = {
        label: float(np.mean(counts)) for label, counts in sorted(per_class.items())
    }

    return RunReport(
        config=config,
        dataset_hash=dataset.content_hash,
        baseline=baseline,
        front=front,
        best_val=best_val,
        best_test=best_test,
        traces=list(traces),
        reduction_best_val=100.0 * (1.0 - front[best_val].patch_count / total),
        reduction_best_test=100.0 * (1.0 - front[best_test].patch_count / total),
        total_patches=total,
        per_class_patches_per_slide=per_class_mean,
        layout=layout,
        train_slide_ids=[rec.slide_id for rec in dataset.train],
    )


def _mean_std(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def aggregate_runs(reports) -> AggregateReport:
    """Mean/std of best-val and best-test scores and sizes across runs."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    first = reports[0]
    for rep in reports[1:]:
        if rep.dataset_hash != first.dataset_hash:
            raise MixedDatasetError(
                "reports span different datasets: "
                f"{rep.dataset_hash[:12]} != {first.dataset_hash[:12]}"
            )

    def stats_at(index_of):
        sols = [rep.front[index_of(rep)] for rep in reports]
        total = first.total_patches
        return {
            "validation_f1": _mean_std([s.validation_f1 for s in sols]),
            "test_f1": _mean_std([s.test_f1 for s in sols]),
            "patch_count": _mean_std([s.patch_count for s in sols]),
            "reduction_percent": _mean_std(
                [100.0 * (1.0 - s.patch_count / total) for s in sols]
            ),
        }

    classes = sorted({c for rep in reports for c in rep.per_class_patches_per_slide})
    per_class = {
        label: float(
            np.mean([rep.per_class_patches_per_slide[label] for rep in reports])
        )
        for label in classes
    }
    return AggregateReport(
        runs=len(reports),
        seeds=[rep.config.seed for rep in reports],
        dataset_hash=first.dataset_hash,
        baseline={
            "patch_count": first.baseline.patch_count,
            "validation_f1": first.baseline.validation_f1,
            "test_f1": first.baseline.test_f1,
        },
        best_val=stats_at(lambda rep: rep.best_val),
        best_test=stats_at(lambda rep: rep.best_test),
        per_class_patches_per_slide=per_class,
    )


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    return CSV_FLOAT_FMT % value


def write_confusion_csv(path, cm: ConfusionMatrix) -> None:
    rows = [
        [cls] + [int(n) for n in cm.counts[i]] for i, cls in enumerate(cm.classes)
    ]
    _write_csv(path, ["true_class"] + list(cm.classes), rows)


def _solution_summary(report, index) -> dict:
    sol = report.front[index]
    return {
        "index": index,
        "patch_count": sol.patch_count,
        "f1_fraction": sol.f1_fraction,
        "validation_f1": sol.validation_f1,
        "test_f1": sol.test_f1,
        "reduction_percent": 100.0 * (1.0 - sol.patch_count / report.total_patches),
    }


def report_summary(report: RunReport) -> dict:
    """JSON-ready summary of one run."""
    cfg = report.config
    return {
        "config": {
            "population_size": cfg.population_size,
            "generations": cfg.generations,
            "crossover_swap_p": cfg.crossover_swap_p,
            "mutation_flip_p": cfg.mutation_flip_p,
            "k_neighbors": cfg.k_neighbors,
            "seed": cfg.seed,
        },
        "dataset_hash": report.dataset_hash,
        "total_patches": report.total_patches,
        "baseline": {
            "patch_count": report.baseline.patch_count,
            "validation_f1": report.baseline.validation_f1,
            "test_f1": report.baseline.test_f1,
        },
        "front_size": len(report.front),
        "best_val": _solution_summary(report, report.best_val),
        "best_test": _solution_summary(report, report.best_test),
        "per_class_patches_per_slide": report.per_class_patches_per_slide,
    }


def export_report(report: RunReport, out_dir) -> Path:
    """Write the run's tables: front CSV, selections, confusions, trace, summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    _write_csv(
        out_dir / "pareto_front.csv",
        ["f1_fraction", "patch_count", "validation_f1", "test_f1"],
        [
            [_fmt(s.f1_fraction), s.patch_count, _fmt(s.validation_f1), _fmt(s.test_f1)]
            for s in report.front
        ],
    )

    selections_dir = out_dir / "selections"
    selections_dir.mkdir(exist_ok=True)
    for idx, sol in enumerate(report.front):
        selection = {
            slide_id: np.flatnonzero(sol.genome[off : off + length]).tolist()
            for slide_id, (_, off, length) in zip(report.train_slide_ids,
                                                  report.layout.segments)
        }
        with open(selections_dir / f"{idx}.json", "w", encoding="utf-8",
                  newline="\n") as fh:
            json.dump(selection, fh)
            fh.write("\n")

    named = {
        "baseline": report.baseline,
        "best_val": report.front[report.best_val],
        "best_test": report.front[report.best_test],
    }
    for name, source in named.items():
        write_confusion_csv(out_dir / f"confusion_val_{name}.csv",
                         source.validation_confusion)
        write_confusion_csv(out_dir / f"confusion_test_{name}.csv",
                         source.test_confusion)

    _write_csv(
        out_dir / "trace.csv",
        ["generation", "best_f2_error", "mean_f2_error", "min_f1_fraction",
         "mean_f1_fraction", "front0_size"],
        [
            [t.generation, _fmt(t.best_f2_error), _fmt(t.mean_f2_error),
             _fmt(t.min_f1_fraction), _fmt(t.mean_f1_fraction), t.front0_size]
            for t in report.traces
        ],
    )

    with open(out_dir / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report_summary(report), fh, indent=2)
        fh.write("\n")
    return out_dir


def export_aggregate(aggregate: AggregateReport, path) -> Path:
    """Write the cross-seed aggregate as JSON."""
    path = Path(path)
    payload = {
        "runs": aggregate.runs,
        "seeds": aggregate.seeds,
        "dataset_hash": aggregate.dataset_hash,
        "baseline": aggregate.baseline,
        "best_val": aggregate.best_val,
        "best_test": aggregate.best_test,
        "per_class_patches_per_slide": aggregate.per_class_patches_per_slide,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return path
