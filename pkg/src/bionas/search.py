"""Weighted architecture search: exhaustive, random, and genetic engines.

The weighted cost function scores an architecture as

    phi = alpha * quality + beta * (1 - storage / S_MAX)

and the search proceeds in three stages: members whose analytical storage
exceeds the hardware constraint are removed before anything is trained,
the chosen engine explores the survivors, and the near-optimal set (the
Pareto front of everything evaluated) is post-filtered by the minimum
quality constraint.

Genetic engines share one loop: a random population of 9-bit genomes,
parent selection, single-point crossover (probability 0.4, uniform cut),
single-bit mutation (probability 0.11 per offspring), and truncation of
parents plus offspring back to the population size. Genomes that decode to
no architecture, or to one removed by the storage constraint, are assigned
fitness 0 and never trained. The selectors differ only in how individuals
are ranked:

    roulette    cumulative-sum wheel over phi (negatives shifted to 0)
    tournament  binary tournament on phi
    nsga2       non-dominated fronts of (quality, storage) + crowding
    spea2       strength/raw fitness + k-nearest-neighbor density

Roulette and tournament are inherently scalar; NSGA-II and SPEA-2 rank on
the raw objective pair unless ``mode="scalarized"`` forces them onto phi.
In multi-objective ranking, undecodable genomes are placed strictly after
every decodable one.

Every stochastic choice draws from one seeded xorshift64* stream, and the
stream is never consulted during fitness evaluation, so a run's trajectory
is reproducible regardless of how evaluations are scheduled. Evaluation
results are memoized per run: each distinct architecture is trained at
most once, and ``unique_eval_calls`` counts those architectures.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
from dataclasses import dataclass, field

from .archspace import ArchParams, ArchitectureSpace, GENOME_BITS, encode
from .evaluate import EvaluationError
from .netmodel import NetConfig, build
from .rng import Rng

GA_ENGINES = ("roulette", "tournament", "nsga2", "spea2")
ENGINES = ("exhaustive", "random") + GA_ENGINES


class EmptySpaceError(Exception):
    """The storage constraint removed every member of the space."""


@dataclass(frozen=True)
class CostFunction:
    alpha: float
    beta: float
    s_max: int

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0 or not 0.0 <= self.beta <= 1.0:
            raise ValueError("alpha and beta must lie in [0, 1]")
        if self.s_max <= 0:
            raise ValueError("s_max must be positive")


@dataclass(frozen=True)
class Constraints:
    s_const: int | None = None
    q_const: float | None = None
    metric: str = "accuracy"
    target_class: str | None = None

    def __post_init__(self):
        if self.s_const is not None and self.s_const <= 0:
            raise ValueError("s_const must be positive when given")
        if self.q_const is not None and not 0.0 <= self.q_const <= 1.0:
            raise ValueError("q_const must lie in [0, 1] when given")


@dataclass(frozen=True)
class GaSettings:
    population_size: int = 30
    generations: int = 5
    crossover_prob: float = 0.4
    mutation_prob: float = 0.11
    seed: int = 0
    mode: str = "multi-objective"  # or "scalarized"

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        for name in ("crossover_prob", "mutation_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mode not in ("multi-objective", "scalarized"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class EvaluatedPoint:
    arch: ArchParams
    quality: float
    storage_bytes: int
    flops: int
    fitness: float
    generation: int


@dataclass
class SearchResult:
    engine: str
    evaluated: list[EvaluatedPoint]
    pareto: list[EvaluatedPoint]
    omega: list[EvaluatedPoint]
    unique_eval_calls: int
    wall_report: list[dict]
    space_size: int
    survivors: int
    warnings: list[str] = field(default_factory=list)


def fitness(quality: float, storage_bytes: float, cf: CostFunction) -> float:
    """The weighted cost phi; callers preset 0 for discarded individuals."""
    return cf.alpha * quality + cf.beta * (1.0 - storage_bytes / cf.s_max)


def _dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """(quality max, storage min) dominance."""
    return a[0] >= b[0] and a[1] <= b[1] and (a[0] > b[0] or a[1] < b[1])


def nondominated_sort(points: list[tuple[float, float]]) -> list[list[int]]:
    """NSGA-II fast non-dominated sort into fronts of indices.

    ``points`` are (quality, storage) pairs: quality is maximized, storage
    minimized. Front i members are dominated only by members of earlier
    fronts.
    """
    n = len(points)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = [0] * n
    fronts: list[list[int]] = [[]]
    for p in range(n):
        for q in range(p + 1, n):
            if _dominates(points[p], points[q]):
                dominated_by[p].append(q)
                domination_count[q] += 1
            elif _dominates(points[q], points[p]):
                dominated_by[q].append(p)
                domination_count[p] += 1
        if domination_count[p] == 0:
            fronts[0].append(p)
    while fronts[-1]:
        nxt = []
        for p in fronts[-1]:
            for q in dominated_by[p]:
                domination_count[q] -= 1
                if domination_count[q] == 0:
                    nxt.append(q)
        fronts.append(nxt)
    fronts.pop()
    return fronts


def crowding_distance(points: list[tuple[float, float]], front: list[int]) -> list[float]:
    """Crowding distance of each front member, aligned with ``front``."""
    size = len(front)
    if size == 0:
        return []
    distance = [0.0] * size
    for objective in range(2):
        order = sorted(range(size), key=lambda i: points[front[i]][objective])
        lo = points[front[order[0]]][objective]
        hi = points[front[order[-1]]][objective]
        distance[order[0]] = distance[order[-1]] = math.inf
        if hi == lo:
            continue
        for rank in range(1, size - 1):
            prev_v = points[front[order[rank - 1]]][objective]
            next_v = points[front[order[rank + 1]]][objective]
            distance[order[rank]] += (next_v - prev_v) / (hi - lo)
    return distance


def spea2_fitness(points: list[tuple[float, float]]) -> list[float]:
    """Strength-Pareto fitness: raw dominated-by strength plus k-NN density.

    Lower is better; non-dominated points have raw fitness 0, so their
    total stays below 0.5 (density is 1/(sigma_k + 2) <= 0.5).
    """
    n = len(points)
    if n == 0:
        return []
    strength = [0] * n
    dominators: list[list[int]] = [[] for _ in range(n)]
    for p in range(n):
        for q in range(n):
            if p != q and _dominates(points[p], points[q]):
                strength[p] += 1
                dominators[q].append(p)
    k = max(1, int(math.isqrt(n)))
    out = []
    for p in range(n):
        raw = sum(strength[d] for d in dominators[p])
        dists = sorted(
            math.hypot(points[p][0] - points[q][0], points[p][1] - points[q][1])
            for q in range(n) if q != p
        )
        sigma = dists[min(k, len(dists)) - 1] if dists else 0.0
        out.append(raw + 1.0 / (sigma + 2.0))
    return out


def pareto_front(evaluated: list[EvaluatedPoint]) -> list[EvaluatedPoint]:
    """Maximal set under (higher quality, lower storage), descending quality."""
    if not evaluated:
        return []
    points = [(p.quality, float(p.storage_bytes)) for p in evaluated]
    first = nondominated_sort(points)[0]
    return sorted((evaluated[i] for i in first), key=lambda p: -p.quality)


def _tiebreak(point: EvaluatedPoint) -> tuple[int, int, int]:
    a = point.arch
    return (a.blocks, a.filter_interval, a.lstm_exp)


def best_by_fitness(points: list[EvaluatedPoint]) -> EvaluatedPoint:
    """Highest phi; ties broken by canonical (B, x, z) order."""
    return min(points, key=lambda p: (-p.fitness, _tiebreak(p)))


def best_by_quality(points: list[EvaluatedPoint]) -> EvaluatedPoint:
    return min(points, key=lambda p: (-p.quality, _tiebreak(p)))


def best_by_storage(points: list[EvaluatedPoint]) -> EvaluatedPoint:
    return min(points, key=lambda p: (p.storage_bytes, _tiebreak(p)))


class _EvalContext:
    """Per-run memo around the evaluator; owns the evaluated list."""

    def __init__(self, cf: CostFunction, constraints: Constraints, evaluator,
                 costs: dict[ArchParams, tuple[int, int]]):
        self.cf = cf
        self.constraints = constraints
        self.evaluator = evaluator
        self.costs = costs
        self.memo: dict[ArchParams, EvaluatedPoint] = {}
        self.evaluated: list[EvaluatedPoint] = []
        self.warnings: list[str] = []
        self.cached_hits = 0

    def score(self, arch: ArchParams, generation: int) -> EvaluatedPoint:
        point = self.memo.get(arch)
        if point is not None:
            self.cached_hits += 1
            return point
        report = self.evaluator(arch)
        quality = report.scalar(self.constraints.metric, self.constraints.target_class)
        storage, flops = self.costs[arch]
        if storage > self.cf.s_max:
            self.warnings.append(f"storage of {arch.text()} exceeds S_MAX; fitness term negative")
        point = EvaluatedPoint(arch, quality, storage, flops,
                               fitness(quality, storage, self.cf), generation)
        self.memo[arch] = point
        self.evaluated.append(point)
        return point

    def result(self, engine: str, wall_report: list[dict],
               space_size: int, survivors: int) -> SearchResult:
        pareto = pareto_front(self.evaluated)
        q_const = self.constraints.q_const
        omega = [p for p in pareto if q_const is None or p.quality >= q_const]
        return SearchResult(
            engine=engine,
            evaluated=list(self.evaluated),
            pareto=pareto,
            omega=omega,
            unique_eval_calls=len(self.evaluated),
            wall_report=wall_report,
            space_size=space_size,
            survivors=survivors,
            warnings=list(self.warnings),
        )


def _wrap_failure(exc: Exception, arch: ArchParams, ctx: _EvalContext, engine: str,
                  wall_report: list[dict], space_size: int, survivors: int) -> EvaluationError:
    if isinstance(exc, EvaluationError):
        err = exc
        if err.arch is None:
            err.arch = arch
    else:
        err = EvaluationError(f"evaluator failed on {arch.text()}: {exc}", arch=arch)
        err.__cause__ = exc
    err.partial = ctx.result(engine, wall_report, space_size, survivors)
    return err


def _filter_space(space: ArchitectureSpace, constraints: Constraints,
                  cfg: NetConfig) -> tuple[ArchitectureSpace, dict[ArchParams, tuple[int, int]]]:
    """Storage prefilter on analytical costs only; no training involved."""
    costs = {}
    kept = []
    for arch in space:
        summary = build(arch, cfg)
        if constraints.s_const is not None and summary.storage_bytes > constraints.s_const:
            continue
        costs[arch] = (summary.storage_bytes, summary.flops)
        kept.append(arch)
    if not kept:
        raise EmptySpaceError(
            f"storage constraint {constraints.s_const} bytes removes all {space.size} members"
        )
    return ArchitectureSpace(tuple(kept)), costs


def exhaustive(space: ArchitectureSpace, evaluator, cf: CostFunction | None = None,
               constraints: Constraints | None = None,
               cfg: NetConfig | None = None) -> SearchResult:
    """Evaluate every member exactly once."""
    return run_algorithm1(space, cf, constraints or Constraints(), "exhaustive",
                          evaluator, cfg=cfg)


def random_search(space: ArchitectureSpace, evaluator, fraction: float = 0.10,
                  seed: int = 0, cf: CostFunction | None = None,
                  constraints: Constraints | None = None,
                  cfg: NetConfig | None = None) -> SearchResult:
    """Evaluate a uniform without-replacement sample of the space."""
    return run_algorithm1(space, cf, constraints or Constraints(), "random",
                          evaluator, settings=GaSettings(seed=seed), cfg=cfg,
                          fraction=fraction)


def ga_search(space: ArchitectureSpace, cf: CostFunction | None, settings: GaSettings,
              selector: str, evaluator, constraints: Constraints | None = None,
              cfg: NetConfig | None = None) -> SearchResult:
    """Genetic search with one of the four selectors."""
    if selector not in GA_ENGINES:
        raise ValueError(f"unknown selector {selector!r}; expected one of {GA_ENGINES}")
    return run_algorithm1(space, cf, constraints or Constraints(), selector,
                          evaluator, settings=settings, cfg=cfg)


def run_algorithm1(space: ArchitectureSpace, cf: CostFunction | None,
                   constraints: Constraints, engine: str, evaluator,
                   settings: GaSettings | None = None, cfg: NetConfig | None = None,
                   fraction: float = 0.10) -> SearchResult:
    """Storage prefilter, engine exploration, then quality post-filter."""
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")
    if space.size == 0:
        raise EmptySpaceError("architecture space is empty")
    cfg = cfg or NetConfig()
    survivors, costs = _filter_space(space, constraints, cfg)
    if cf is None:
        cf = CostFunction(alpha=0.5, beta=0.5,
                          s_max=max(build(a, cfg).storage_bytes for a in space))
    ctx = _EvalContext(cf, constraints, evaluator, costs)

    if engine == "exhaustive":
        return _explore_listed(ctx, list(survivors), "exhaustive", space.size, survivors.size)
    if engine == "random":
        if not 0 < fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")
        settings = settings or GaSettings()
        rng = Rng(settings.seed)
        count = math.ceil(fraction * survivors.size)
        members = list(survivors)
        picks = [members[i] for i in rng.sample_indices(len(members), count)]
        return _explore_listed(ctx, picks, "random", space.size, survivors.size)
    return _ga(ctx, survivors, engine, settings or GaSettings(), space.size)


def _explore_listed(ctx: _EvalContext, members: list[ArchParams], engine: str,
                    space_size: int, survivor_count: int) -> SearchResult:
    wall_report: list[dict] = []
    for arch in members:
        try:
            ctx.score(arch, generation=0)
        except Exception as exc:  # noqa: BLE001 - re-raised with identity
            raise _wrap_failure(exc, arch, ctx, engine, wall_report,
                                space_size, survivor_count) from exc
    wall_report.append(_generation_entry(0, ctx, [p.fitness for p in ctx.evaluated]))
    return ctx.result(engine, wall_report, space_size, survivor_count)


def _generation_entry(generation: int, ctx: _EvalContext, fitnesses: list[float]) -> dict:
    usable = fitnesses or [0.0]
    return {
        "generation": generation,
        "unique_evaluations": len(ctx.evaluated),
        "cached_hits": ctx.cached_hits,
        "best_fitness": max(usable),
        "mean_fitness": sum(usable) / len(usable),
    }


def _ga(ctx: _EvalContext, survivors: ArchitectureSpace, engine: str,
        settings: GaSettings, space_size: int) -> SearchResult:
    rng = Rng(settings.seed)
    lookup = {encode(arch).to_int(): arch for arch in survivors}
    pop_size = settings.population_size
    scalar_only = settings.mode == "scalarized" or engine in ("roulette", "tournament")
    wall_report: list[dict] = []

    def evaluate_all(genomes: list[int], generation: int) -> list[float]:
        """phi per genome; 0 for undecodable or constraint-removed genomes."""
        phis = []
        for genome in genomes:
            arch = lookup.get(genome)
            if arch is None:
                phis.append(0.0)
                continue
            try:
                phis.append(ctx.score(arch, generation).fitness)
            except Exception as exc:  # noqa: BLE001
                raise _wrap_failure(exc, arch, ctx, engine, wall_report,
                                    space_size, survivors.size) from exc
        return phis

    def rank_keys(genomes: list[int], phis: list[float]) -> list[tuple]:
        """Sort keys, lower = better; ties broken later by genome value."""
        if scalar_only:
            return [(-phi,) for phi in phis]
        valid = [i for i, g in enumerate(genomes) if g in lookup]
        keys: list[tuple] = [(math.inf, 0.0)] * len(genomes)
        if valid:
            pts = []
            for i in valid:
                point = ctx.memo[lookup[genomes[i]]]
                pts.append((point.quality, point.storage_bytes / ctx.cf.s_max))
            if engine == "nsga2":
                fronts = nondominated_sort(pts)
                for front_idx, front in enumerate(fronts):
                    crowd = crowding_distance(pts, front)
                    for member, distance in zip(front, crowd):
                        keys[valid[member]] = (float(front_idx), -distance)
            else:  # spea2
                for member, fit in enumerate(spea2_fitness(pts)):
                    keys[valid[member]] = (fit, 0.0)
        return keys

    def select_parent(genomes: list[int], phis: list[float], keys: list[tuple]) -> int:
        if engine == "roulette":
            shift = min(0.0, min(phis))
            weights = [phi - shift for phi in phis]
            total = sum(weights)
            if total <= 0.0:  # degenerate wheel: every slice is empty
                return genomes[rng.randrange(len(genomes))]
            cumulative = []
            acc = 0.0
            for w in weights:
                acc += w
                cumulative.append(acc)
            pick = rng.random() * total
            slot = min(bisect.bisect_right(cumulative, pick), len(genomes) - 1)
            return genomes[slot]
        i = rng.randrange(len(genomes))
        j = rng.randrange(len(genomes))
        return genomes[i] if keys[i] <= keys[j] else genomes[j]

    def spawn(genomes: list[int], phis: list[float], keys: list[tuple]) -> int:
        p1 = select_parent(genomes, phis, keys)
        p2 = select_parent(genomes, phis, keys)
        child = p1
        if rng.random() < settings.crossover_prob:
            cut = 1 + rng.randrange(GENOME_BITS - 1)
            suffix_mask = (1 << (GENOME_BITS - cut)) - 1
            child = (p2 & ~suffix_mask) | (p1 & suffix_mask)
        if rng.random() < settings.mutation_prob:
            child ^= 1 << rng.randrange(GENOME_BITS)
        return child

    population = [rng.randrange(1 << GENOME_BITS) for _ in range(pop_size)]
    phis = evaluate_all(population, 0)
    wall_report.append(_generation_entry(0, ctx, phis))

    for generation in range(1, settings.generations + 1):
        keys = rank_keys(population, phis)
        offspring: list[int] = []
        while len(offspring) < pop_size:
            child = spawn(population, phis, keys)
            for _ in range(8):  # re-draw duplicates within the brood, then admit
                if child not in offspring:
                    break
                child = spawn(population, phis, keys)
            offspring.append(child)
        child_phis = evaluate_all(offspring, generation)

        pool = population + offspring
        pool_phis = phis + child_phis
        pool_keys = rank_keys(pool, pool_phis)
        order = sorted(range(len(pool)), key=lambda i: (pool_keys[i], pool[i]))
        population = [pool[i] for i in order[:pop_size]]
        phis = [pool_phis[i] for i in order[:pop_size]]
        wall_report.append(_generation_entry(generation, ctx, phis))

    return ctx.result(engine, wall_report, space_size, survivors.size)


def result_csv(result: SearchResult, rows: list[EvaluatedPoint] | None = None) -> str:
    """Evaluated points (or a chosen subset) as the run CSV."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["arch", "B", "x", "z", "quality", "storage_bytes", "flops",
                     "fitness", "generation", "engine"])
    for p in (result.evaluated if rows is None else rows):
        writer.writerow([
            encode(p.arch).bits, p.arch.blocks, p.arch.filter_interval, p.arch.lstm_exp,
            repr(p.quality), p.storage_bytes, p.flops, repr(p.fitness),
            p.generation, result.engine,
        ])
    return out.getvalue()


def run_manifest(result: SearchResult, cf: CostFunction, constraints: Constraints,
                 settings: GaSettings | None, extra: dict | None = None) -> str:
    """Reproducibility manifest as canonical JSON.

    Timings are reported as evaluator-call accounting rather than wall
    clock, so identical runs serialize to identical bytes.
    """
    manifest = {
        "engine": result.engine,
        "cost_function": {"alpha": cf.alpha, "beta": cf.beta, "s_max": cf.s_max},
        "constraints": {
            "s_const": constraints.s_const,
            "q_const": constraints.q_const,
            "metric": constraints.metric,
            "target_class": constraints.target_class,
        },
        "settings": None if settings is None else {
            "population_size": settings.population_size,
            "generations": settings.generations,
            "crossover_prob": settings.crossover_prob,
            "mutation_prob": settings.mutation_prob,
            "seed": settings.seed,
            "mode": settings.mode,
        },
        "space_size": result.space_size,
        "survivors_after_s_const": result.survivors,
        "timings": {
            "unique_eval_calls": result.unique_eval_calls,
            "cost_vs_exhaustive": result.unique_eval_calls / result.survivors,
            "per_generation": result.wall_report,
        },
        "counts": {
            "evaluated": len(result.evaluated),
            "pareto": len(result.pareto),
            "omega": len(result.omega),
        },
        "warnings": result.warnings,
    }
    if extra:
        manifest.update(extra)
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"
