"""Command-line orchestration: gen-synth, run, baseline.

Exit codes: 0 success, 2 configuration error, 3 dataset error, 4 runtime
failure. Progress goes to stderr; machine-readable output only to files.
Flag values override config-file values, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .dataset import (
    EmbeddingFormatError,
    ManifestParseError,
    ValidationError,
    load_dataset,
)
from .evolution import EvolutionConfig, run_evolution
from .pareto_report import (
    aggregate_runs,
    build_report,
    compute_baseline,
    export_aggregate,
    export_report,
    write_confusion_csv,
)
from .synthgen import SynthConfig, generate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_RUNTIME = 4

DATASET_ERRORS = (ManifestParseError, EmbeddingFormatError, ValidationError)


class ConfigError(Exception):
    pass


def parse_seeds(text: str) -> list[int]:
    """Parse '1..10' ranges and comma lists like '1,3,7..9' into distinct seeds."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise ConfigError(f"empty seed entry in '{text}'")
        try:
            if ".." in part:
                lo_text, hi_text = part.split("..", 1)
                lo, hi = int(lo_text), int(hi_text)
                if hi < lo:
                    raise ConfigError(f"descending seed range '{part}'")
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError as exc:
            raise ConfigError(f"bad seed entry '{part}'") from exc
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seeds must be distinct: '{text}'")
    return seeds


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def _layered(file_values: dict, flag_values: dict, allowed: dict) -> dict:
    """defaults <- config file <- flags; rejects unknown config keys."""
    merged = dict(allowed)
    for key, value in file_values.items():
        if key not in allowed:
            raise ConfigError(f"unknown config key '{key}'")
        merged[key] = value
    for key, value in flag_values.items():
        if value is not None:
            merged[key] = value
    return merged


def _evolution_defaults() -> dict:
    defaults = EvolutionConfig()
    return {
        "population_size": defaults.population_size,
        "generations": defaults.generations,
        "crossover_swap_p": defaults.crossover_swap_p,
        "mutation_flip_p": defaults.mutation_flip_p,
        "k_neighbors": defaults.k_neighbors,
    }


def _evolution_config(args) -> EvolutionConfig:
    merged = _layered(
        _load_config_file(args.config),
        {
            "population_size": args.pop_size,
            "generations": args.generations,
            "crossover_swap_p": args.swap_p,
            "mutation_flip_p": args.flip_p,
            "k_neighbors": args.k,
        },
        _evolution_defaults(),
    )
    config = EvolutionConfig(**merged)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def _run_one_seed(dataset, config, seed, out_dir, workers):
    cfg = replace(config, seed=seed)

    def progress(trace):
        print(
            f"[seed {seed}] gen {trace.generation:4d}  "
            f"best_err={trace.best_f2_error:.4f}  "
            f"mean_err={trace.mean_f2_error:.4f}  "
            f"min_frac={trace.min_f1_fraction:.4f}  "
            f"front0={trace.front0_size}",
            file=sys.stderr,
        )

    population, traces = run_evolution(dataset, cfg, workers=workers,
                                       on_generation=progress)
    report = build_report(dataset, cfg, population, traces)
    export_report(report, Path(out_dir) / f"seed_{seed}")
    return report


def cmd_run(args) -> int:
    dataset = load_dataset(args.dataset)
    dataset.require_runnable()
    config = _evolution_config(args)
    seeds = parse_seeds(args.seeds)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.parallel_seeds > 1:
        with ThreadPoolExecutor(max_workers=args.parallel_seeds) as pool:
            reports = list(
                pool.map(
                    lambda s: _run_one_seed(dataset, config, s, out_dir, args.workers),
                    seeds,
                )
            )
    else:
        reports = [
            _run_one_seed(dataset, config, s, out_dir, args.workers) for s in seeds
        ]

    export_aggregate(aggregate_runs(reports), out_dir / "aggregate.json")
    return EXIT_OK


def _synth_config(args) -> SynthConfig:
    defaults = SynthConfig()
    merged = _layered(
        _load_config_file(args.config),
        {
            "classes": args.classes,
            "train_slides_per_class": args.train_per_class,
            "validation_slides_per_class": args.val_per_class,
            "test_slides_per_class": args.test_per_class,
            "patches_min": args.min_patches,
            "patches_max": args.max_patches,
            "informative_fraction": args.informative_fraction,
            "dim": args.dim,
            "class_separation": args.separation,
            "noise_sigma": args.noise_sigma,
            "seed": args.seed,
        },
        {f.name: getattr(defaults, f.name) for f in defaults.__dataclass_fields__.values()},
    )
    config = SynthConfig(**merged)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def cmd_gen_synth(args) -> int:
    config = _synth_config(args)
    dataset = generate(config, out_dir=args.out)
    n_patches = sum(rec.rows for rec in dataset.slides)
    print(
        f"wrote {len(dataset.slides)} slides, {n_patches} patches, "
        f"dim {dataset.dim} -> {args.out}"
    )
    return EXIT_OK


def cmd_baseline(args) -> int:
    dataset = load_dataset(args.dataset)
    merged = _layered(
        _load_config_file(args.config),
        {"k_neighbors": args.k},
        _evolution_defaults(),
    )
    k = merged["k_neighbors"]
    if not isinstance(k, int) or k < 1:
        raise ConfigError("k_neighbors must be an integer >= 1")
    baseline = compute_baseline(dataset, k)
    print(
        f"baseline: patch_count={baseline.patch_count}  "
        f"validation_f1={baseline.validation_f1:.6f}  "
        f"test_f1={baseline.test_f1:.6f}"
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "patch_count": baseline.patch_count,
            "validation_f1": baseline.validation_f1,
            "test_f1": baseline.test_f1,
        }
        with open(out_dir / "baseline.json", "w", encoding="utf-8",
                  newline="\n") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        write_confusion_csv(out_dir / "confusion_val_baseline.csv",
                         baseline.validation_confusion)
        write_confusion_csv(out_dir / "confusion_test_baseline.csv",
                         baseline.test_confusion)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evops",
        description="Evolve minimal patch-embedding subsets per training slide.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="multi-seed optimization runs plus reports")
    run.add_argument("--dataset", required=True, help="dataset dir or manifest path")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--config", default=None, help="JSON config file")
    run.add_argument("--seeds", default="0", help="e.g. '0', '1..10', '1,4,9'")
    run.add_argument("--workers", type=int, default=1,
                     help="fitness-evaluation threads (never changes results)")
    run.add_argument("--parallel-seeds", type=int, default=1,
                     help="run this many seeds concurrently")
    run.add_argument("--generations", type=int, default=None)
    run.add_argument("--pop-size", type=int, default=None)
    run.add_argument("--swap-p", type=float, default=None)
    run.add_argument("--flip-p", type=float, default=None)
    run.add_argument("--k", type=int, default=None)
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen-synth", help="generate a synthetic cohort")
    gen.add_argument("--out", required=True, help="output dataset directory")
    gen.add_argument("--config", default=None, help="JSON config file")
    gen.add_argument("--classes", type=int, default=None)
    gen.add_argument("--train-per-class", type=int, default=None)
    gen.add_argument("--val-per-class", type=int, default=None)
    gen.add_argument("--test-per-class", type=int, default=None)
    gen.add_argument("--min-patches", type=int, default=None)
    gen.add_argument("--max-patches", type=int, default=None)
    gen.add_argument("--informative-fraction", type=float, default=None)
    gen.add_argument("--dim", type=int, default=None)
    gen.add_argument("--separation", type=float, default=None)
    gen.add_argument("--noise-sigma", type=float, default=None)
    gen.add_argument("--seed", type=int, default=None)
    gen.set_defaults(func=cmd_gen_synth)

    base = sub.add_parser("baseline", help="score the all-patches reference")
    base.add_argument("--dataset", required=True, help="dataset dir or manifest path")
    base.add_argument("--out", default=None, help="optional output directory")
    base.add_argument("--config", default=None, help="JSON config file (k_neighbors)")
    base.add_argument("--k", type=int, default=None)
    base.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATASET_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
