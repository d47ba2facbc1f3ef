"""A full optimization run: coverage-safe operators, elitist fronts, export.

The optimizer evolves a population of patch-selection genomes against two
minimized objectives (selected fraction, validation k-NN error). Every
operator repairs slides left without a selected patch, so every individual
ever evaluated is coverage-valid. The final front is re-scored on the
validation and test splits and exported as CSV/JSON.
"""

import tempfile
from pathlib import Path

from evops.evolution import EvolutionConfig, run_evolution
from evops.pareto_report import build_report, compute_baseline, export_report
from evops.synthgen import SynthConfig, generate

dataset = generate(SynthConfig(classes=3, train_slides_per_class=6,
                               validation_slides_per_class=3, test_slides_per_class=3,
                               patches_min=12, patches_max=24,
                               informative_fraction=0.25, dim=16,
                               class_separation=4.0, seed=100))
config = EvolutionConfig(population_size=24, generations=15, seed=1)

baseline = compute_baseline(dataset, config.k_neighbors)
print(f"baseline: {baseline.patch_count} patches, "
      f"validation F1 {baseline.validation_f1:.3f}, test F1 {baseline.test_f1:.3f}")

population, traces = run_evolution(dataset, config)
print("\ngen  best_err  mean_err  min_frac  front0")
for t in traces[:: max(1, len(traces) // 8)]:
    print(f"{t.generation:3d}   {t.best_f2_error:.4f}    {t.mean_f2_error:.4f}"
          f"    {t.min_f1_fraction:.4f}    {t.front0_size}")

report = build_report(dataset, config, population, traces)
print(f"\nfinal front ({len(report.front)} solutions):")
print("  patches  fraction  val_F1   test_F1")
for i, s in enumerate(report.front):
    tag = ""
    if i == report.best_val:
        tag += "  <- best validation"
    if i == report.best_test:
        tag += "  <- best test"
    print(f"  {s.patch_count:7d}  {s.f1_fraction:.4f}    {s.validation_f1:.3f}"
          f"    {s.test_f1:.3f}{tag}")

print(f"\nreduction at best-val: {report.reduction_best_val:.1f}% "
      f"of {report.total_patches} patches dropped")

out_dir = Path(tempfile.mkdtemp(prefix="evops_demo_run_"))
export_report(report, out_dir)
print(f"\nexported artifacts in {out_dir}:")
for path in sorted(out_dir.rglob("*")):
    if path.is_file():
        print(f"  {path.relative_to(out_dir)}")
