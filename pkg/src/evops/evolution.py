"""Coverage-safe genetic operators, Pareto ranking, and the generational loop.

Genomes are boolean numpy vectors over all training patches, one contiguous
segment per training slide. Every operator preserves the coverage
constraint: each segment keeps at least one set bit, repaired in place when
random variation would empty it.

Randomness discipline: one root seed feeds a single sequential generator.
Draw order is fixed (initialization, then per generation: parent selection,
all crossovers pair-by-pair, all mutations offspring-by-offspring), and
fitness evaluation consumes no randomness, so a run is a deterministic
function of (dataset, config) regardless of evaluation parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import GenomeLayout, SplitDataset, build_layout
from .fitness import FitnessEvaluator, FitnessPair, segment_popcounts


@dataclass(eq=False)
class Individual:
    """A candidate patch subset with lazily assigned fitness and rank info.

    Compared by identity: duplicates of a genome are distinct individuals.
    """

    genome: np.ndarray  # (P,) bool
    fitness: FitnessPair | None = None
    rank: int | None = None
    crowding: float | None = None


@dataclass
class EvolutionConfig:
    population_size: int = 100
    generations: int = 50
    crossover_swap_p: float = 0.9
    mutation_flip_p: float = 0.01
    k_neighbors: int = 5
    seed: int = 0

    def validate(self) -> None:
        if self.population_size < 2 or self.population_size % 2 != 0:
            raise ValueError("population_size must be an even integer >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        for name in ("crossover_swap_p", "mutation_flip_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


@dataclass(frozen=True)
class GenerationTrace:
    """Per-generation population diagnostics."""

    generation: int
    best_f2_error: float
    mean_f2_error: float
    min_f1_fraction: float
    mean_f1_fraction: float
    front0_size: int


def coverage_valid(genome: np.ndarray, layout: GenomeLayout) -> bool:
    """True iff every slide segment has at least one set bit."""
    return bool((segment_popcounts(genome, layout) > 0).all())


def initialize_population(layout, config, rng) -> list[Individual]:
    """Seed each slide with one random patch, then add a uniform extra count.

    The extra count is drawn uniformly from [0, P - S] per individual and
    placed on distinct currently-unset positions, so total set-bit counts
    cover the whole feasible range evenly.
    """
    total = layout.total_patches
    n_slides = layout.n_slides
    population = []
    for _ in range(config.population_size):
        genome = np.zeros(total, dtype=bool)
        picks = layout.offsets + rng.integers(0, layout.lengths)
        genome[picks] = True
        extra = int(rng.integers(0, total - n_slides + 1))
        if extra:
            unset = np.flatnonzero(~genome)
            genome[rng.permutation(unset)[:extra]] = True
        population.append(Individual(genome=genome))
    return population


def _repair_empty_segments_from_parents(child, parent_a, parent_b, layout, rng):
    counts = segment_popcounts(child, layout)
    for seg in np.flatnonzero(counts == 0):
        _, offset, length = layout.segments[seg]
        source = parent_a if rng.integers(2) == 0 else parent_b
        child[offset : offset + length] = source[offset : offset + length]


def safe_uniform_crossover(parent_a, parent_b, layout, swap_p, rng):
    """Gene-wise exchange with probability swap_p, then segment repair.

    Any child segment left all-zero is overwritten with the corresponding
    segment of one of the two original parents, chosen at random; both
    parents are coverage-valid so repair always succeeds.
    """
    swap = rng.random(layout.total_patches) < swap_p
    child_a = np.where(swap, parent_b, parent_a)
    child_b = np.where(swap, parent_a, parent_b)
    _repair_empty_segments_from_parents(child_a, parent_a, parent_b, layout, rng)
    _repair_empty_segments_from_parents(child_b, parent_a, parent_b, layout, rng)
    return child_a, child_b


def safe_bitflip_mutation(genome, layout, flip_p, rng):
    """Flip each bit independently, then re-seed any emptied segment."""
    flips = rng.random(layout.total_patches) < flip_p
    mutated = genome ^ flips
    counts = segment_popcounts(mutated, layout)
    for seg in np.flatnonzero(counts == 0):
        _, offset, length = layout.segments[seg]
        mutated[offset + rng.integers(0, length)] = True
    return mutated


def dominates(a: FitnessPair, b: FitnessPair) -> bool:
    """True iff a is no worse in both objectives and strictly better in one."""
    return (
        a.f1_fraction <= b.f1_fraction
        and a.f2_error <= b.f2_error
        and (a.f1_fraction < b.f1_fraction or a.f2_error < b.f2_error)
    )


def _objective_matrix(population) -> np.ndarray:
    return np.array(
        [(ind.fitness.f1_fraction, ind.fitness.f2_error) for ind in population],
        dtype=np.float64,
    )


def fast_non_dominated_sort(population) -> list[list[int]]:
    """Partition indices into Pareto fronts and set each individual's rank.

    Front 0 holds individuals dominated by none; front i holds those
    dominated only by members of earlier fronts.
    """
    objs = _objective_matrix(population)
    le = (objs[:, None, :] <= objs[None, :, :]).all(axis=2)
    lt = (objs[:, None, :] < objs[None, :, :]).any(axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0).astype(np.int64)

    fronts: list[list[int]] = []
    current = np.flatnonzero(counts == 0)
    while current.size:
        fronts.append(current.tolist())
        counts[current] = -(len(population) + 1)
        counts -= dom[current].sum(axis=0)
        current = np.flatnonzero(counts == 0)
    for rank, front in enumerate(fronts):
        for i in front:
            population[i].rank = rank
    return fronts


def crowding_distance(front_fitness) -> list[float]:
    """Per-solution density measure within one front.

    Boundary solutions of each objective's sorted order get infinity;
    interior solutions accumulate the normalized gap between neighbors.
    An objective with zero range contributes nothing.
    """
    n = len(front_fitness)
    if n <= 2:
        return [math.inf] * n
    objs = np.array([fp.astuple() for fp in front_fitness], dtype=np.float64)
    dist = np.zeros(n)
    for m in range(objs.shape[1]):
        order = np.argsort(objs[:, m], kind="stable")
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        span = objs[order[-1], m] - objs[order[0], m]
        if span > 0:
            dist[order[1:-1]] += (objs[order[2:], m] - objs[order[:-2], m]) / span
    return dist.tolist()


def _assign_crowding(population, front) -> list[float]:
    dists = crowding_distance([population[i].fitness for i in front])
    for i, d in zip(front, dists):
        population[i].crowding = d
    return dists


def rank_population(population) -> list[list[int]]:
    """Sort into fronts and assign rank plus within-front crowding."""
    fronts = fast_non_dominated_sort(population)
    for front in fronts:
        _assign_crowding(population, front)
    return fronts


def select_parents(population, rng) -> list[Individual]:
    """Binary tournaments on (rank, crowding); pool size equals population size."""
    pool = []
    n = len(population)
    for _ in range(n):
        i, j = rng.integers(0, n, size=2)
        a, b = population[i], population[j]
        if a.rank != b.rank:
            winner = a if a.rank < b.rank else b
        elif a.crowding != b.crowding:
            winner = a if a.crowding > b.crowding else b
        else:
            winner = a if rng.integers(2) == 0 else b
        pool.append(winner)
    return pool


def select_survivors(combined, population_size) -> list[Individual]:
    """Elitist replacement: fill by whole fronts, truncate by crowding.

    The overflowing front is cut by descending crowding distance computed
    within that front, ties broken by lower index in the combined list.
    """
    fronts = fast_non_dominated_sort(combined)
    survivors: list[Individual] = []
    for front in fronts:
        dists = _assign_crowding(combined, front)
        if len(survivors) + len(front) <= population_size:
            survivors.extend(combined[i] for i in front)
            if len(survivors) == population_size:
                break
        else:
            need = population_size - len(survivors)
            order = sorted(range(len(front)), key=lambda t: (-dists[t], front[t]))
            survivors.extend(combined[front[t]] for t in order[:need])
            break
    return survivors


def _evaluate_missing(population, evaluator, workers) -> None:
    todo = [ind for ind in population if ind.fitness is None]
    for ind, pair in zip(todo, evaluator.evaluate_many([i.genome for i in todo], workers)):
        ind.fitness = pair


def _trace(generation, population) -> GenerationTrace:
    f2 = [ind.fitness.f2_error for ind in population]
    f1 = [ind.fitness.f1_fraction for ind in population]
    return GenerationTrace(
        generation=generation,
        best_f2_error=min(f2),
        mean_f2_error=sum(f2) / len(f2),
        min_f1_fraction=min(f1),
        mean_f1_fraction=sum(f1) / len(f1),
        front0_size=sum(1 for ind in population if ind.rank == 0),
    )


def run_evolution(dataset: SplitDataset, config: EvolutionConfig, workers=1,
                  on_generation=None):
    """Evolve patch subsets against the validation split.

    Returns (final population, per-generation traces). Trace 0 describes the
    evaluated initial population. ``on_generation`` receives each trace as
    it is produced. Deterministic in (dataset, config.seed); ``workers``
    only parallelizes fitness evaluation and never changes results.
    """
    config.validate()
    if not dataset.train:
        raise ValueError("train split is empty")
    if not dataset.validation:
        raise ValueError("validation split is empty")

    layout = build_layout(dataset.train)
    evaluator = FitnessEvaluator(
        layout, dataset.train, dataset.validation, config.k_neighbors,
        classes=dataset.classes,
    )
    rng = np.random.default_rng(config.seed)

    population = initialize_population(layout, config, rng)
    _evaluate_missing(population, evaluator, workers)
    rank_population(population)
    traces = [_trace(0, population)]
    if on_generation:
        on_generation(traces[-1])

    for generation in range(1, config.generations + 1):
        pool = select_parents(population, rng)
        children: list[np.ndarray] = []
        for i in range(0, len(pool), 2):
            children.extend(
                safe_uniform_crossover(
                    pool[i].genome, pool[i + 1].genome, layout,
                    config.crossover_swap_p, rng,
                )
            )
        offspring = [
            Individual(genome=safe_bitflip_mutation(child, layout,
                                                    config.mutation_flip_p, rng))
            for child in children
        ]
        combined = population + offspring
        _evaluate_missing(combined, evaluator, workers)
        population = select_survivors(combined, config.population_size)
        traces.append(_trace(generation, population))
        if on_generation:
            on_generation(traces[-1])

    return population, traces
