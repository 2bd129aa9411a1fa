import math

import numpy as np
import pytest

from bionas.archspace import ArchParams, enumerate_space
from bionas.evaluate import EvaluationError, SurrogateEvaluator
from bionas.netmodel import NetConfig, build, s_max
from bionas.search import (
    Constraints,
    CostFunction,
    EmptySpaceError,
    EvaluatedPoint,
    GaSettings,
    best_by_fitness,
    best_by_quality,
    best_by_storage,
    crowding_distance,
    exhaustive,
    fitness,
    ga_search,
    nondominated_sort,
    pareto_front,
    random_search,
    result_csv,
    run_algorithm1,
    spea2_fitness,
)

SPACE = enumerate_space()
CFG = NetConfig()
S_MAX = s_max(SPACE, CFG)
CF = CostFunction(alpha=0.5, beta=0.5, s_max=S_MAX)


def oracle_dominates(a, b):
    return a[0] >= b[0] and a[1] <= b[1] and a != b


def oracle_fronts(points):
    """Peel non-dominated layers by direct pairwise checks."""
    remaining = list(range(len(points)))
    fronts = []
    while remaining:
        front = [
            p for p in remaining
            if not any(oracle_dominates(points[q], points[p]) for q in remaining if q != p)
        ]
        fronts.append(front)
        remaining = [p for p in remaining if p not in front]
    return fronts


def surrogate():
    return SurrogateEvaluator(CFG)


# --- fitness ------------------------------------------------------------------

def test_fitness_hand_example():
    cf = CostFunction(0.5, 0.5, 60 * 2**20)
    assert fitness(0.9, 30 * 2**20, cf) == pytest.approx(0.70)


def test_fitness_weight_collapse():
    cf = CostFunction(1.0, 0.0, 1000)
    for s in (0, 500, 10_000):
        assert fitness(0.73, s, cf) == pytest.approx(0.73)


def test_fitness_boundary():
    cf = CostFunction(0.0, 1.0, 1000)
    assert fitness(0.5, 1000, cf) == pytest.approx(0.0)


def test_fitness_overweight_goes_negative():
    cf = CostFunction(0.0, 1.0, 1000)
    assert fitness(1.0, 2000, cf) < 0.0


def test_cost_function_validation():
    with pytest.raises(ValueError):
        CostFunction(1.5, 0.5, 100)
    with pytest.raises(ValueError):
        CostFunction(0.5, 0.5, 0)


# --- dominance machinery --------------------------------------------------------

def test_nondominated_sort_hand_example():
    points = [(0.9, 10.0), (0.8, 5.0), (0.7, 20.0)]
    fronts = nondominated_sort(points)
    assert fronts == [[0, 1], [2]]


def test_nondominated_sort_single_point():
    assert nondominated_sort([(0.5, 3.0)]) == [[0]]


def test_nondominated_sort_matches_oracle():
    rng = np.random.default_rng(2024)
    for trial in range(100):
        points = [(round(float(q), 2), round(float(s), 2))
                  for q, s in zip(rng.random(50), rng.random(50) * 100)]
        got = nondominated_sort(points)
        expected = oracle_fronts(points)
        assert [sorted(f) for f in got] == [sorted(f) for f in expected], trial


def test_crowding_boundaries_infinite():
    points = [(0.1, 1.0), (0.5, 5.0), (0.9, 9.0)]
    distances = crowding_distance(points, [0, 1, 2])
    assert distances[0] == math.inf and distances[2] == math.inf
    assert 0 < distances[1] < math.inf


def test_spea2_nondominated_has_zero_raw():
    points = [(0.9, 1.0), (0.1, 50.0)]
    fits = spea2_fitness(points)
    assert fits[0] < 0.5  # raw 0 + density < 0.5


def test_spea2_three_point_chain():
    # a dominates b and c; b dominates c.
    a, b, c = (0.9, 1.0), (0.5, 2.0), (0.1, 3.0)
    fits = spea2_fitness([a, b, c])
    assert math.floor(fits[0]) == 0
    assert math.floor(fits[1]) == 2  # dominated by a alone: strength(a) = 2
    assert math.floor(fits[2]) == 3  # strength(a) + strength(b) = 2 + 1


def test_spea2_duplicates_equal():
    fits = spea2_fitness([(0.5, 5.0), (0.5, 5.0), (0.9, 1.0)])
    assert fits[0] == fits[1]


def test_pareto_front_of_front_is_itself():
    rng = np.random.default_rng(5)
    points = [
        EvaluatedPoint(ArchParams(b % 16, 1 + b % 4, 4 + b % 5), float(q), int(s) + 1, 10, 0.0, 0)
        for b, (q, s) in enumerate(zip(rng.random(60), rng.random(60) * 1e6))
    ]
    front = pareto_front(points)
    assert pareto_front(front) == front
    qualities = [p.quality for p in front]
    assert qualities == sorted(qualities, reverse=True)


def test_pareto_front_identical_points_all_returned():
    points = [EvaluatedPoint(ArchParams(1, 1, 4), 0.5, 100, 10, 0.0, 0)] * 4
    assert len(pareto_front(points)) == 4


# --- engines -------------------------------------------------------------------

def test_exhaustive_covers_space():
    result = exhaustive(SPACE, surrogate(), CF)
    assert result.unique_eval_calls == 320
    assert len(result.evaluated) == 320
    assert {p.arch for p in result.evaluated} == set(SPACE.members)


def test_exhaustive_pareto_matches_bruteforce():
    result = exhaustive(SPACE, surrogate(), CF)
    points = [(p.quality, float(p.storage_bytes)) for p in result.evaluated]
    expected_idx = sorted(oracle_fronts(points)[0])
    expected = {result.evaluated[i].arch for i in expected_idx}
    assert {p.arch for p in result.pareto} == expected


def test_exhaustive_singleton():
    space = SPACE.restrict(lambda a: a == ArchParams(2, 2, 5))
    result = exhaustive(space, surrogate(), CF)
    assert result.unique_eval_calls == 1


def test_random_search_sample_size():
    result = random_search(SPACE, surrogate(), fraction=0.10, seed=3, cf=CF)
    assert result.unique_eval_calls == 32  # ceil(0.10 * 320)


def test_random_search_seed_determinism():
    a = random_search(SPACE, surrogate(), fraction=0.10, seed=11, cf=CF)
    b = random_search(SPACE, surrogate(), fraction=0.10, seed=11, cf=CF)
    assert [p.arch for p in a.evaluated] == [p.arch for p in b.evaluated]
    c = random_search(SPACE, surrogate(), fraction=0.10, seed=12, cf=CF)
    assert [p.arch for p in a.evaluated] != [p.arch for p in c.evaluated]


def test_random_search_full_fraction_is_exhaustive_coverage():
    result = random_search(SPACE, surrogate(), fraction=1.0, seed=0, cf=CF)
    assert {p.arch for p in result.evaluated} == set(SPACE.members)


@pytest.mark.parametrize("engine", ["roulette", "tournament", "nsga2", "spea2"])
def test_ga_determinism_and_call_bounds(engine):
    settings = GaSettings(seed=99)
    a = ga_search(SPACE, CF, settings, engine, surrogate())
    b = ga_search(SPACE, CF, settings, engine, surrogate())
    assert result_csv(a) == result_csv(b)
    assert a.wall_report == b.wall_report
    assert a.unique_eval_calls <= 30 * 6
    assert a.unique_eval_calls < 320
    assert len(a.wall_report) == 6  # initial population plus five generations


@pytest.mark.parametrize("engine", ["roulette", "tournament", "nsga2", "spea2"])
def test_ga_subset_of_exhaustive(engine):
    full = {p.arch: p for p in exhaustive(SPACE, surrogate(), CF).evaluated}
    result = ga_search(SPACE, CF, GaSettings(seed=4), engine, surrogate())
    for p in result.evaluated:
        reference = full[p.arch]
        assert p.quality == reference.quality
        assert p.storage_bytes == reference.storage_bytes


def test_ga_scalarized_mode_runs():
    settings = GaSettings(seed=1, mode="scalarized")
    result = ga_search(SPACE, CF, settings, "nsga2", surrogate())
    assert result.unique_eval_calls > 0


def test_ga_unknown_selector_rejected():
    with pytest.raises(ValueError):
        ga_search(SPACE, CF, GaSettings(), "annealing", surrogate())


def test_settings_validation():
    with pytest.raises(ValueError):
        GaSettings(population_size=1)
    with pytest.raises(ValueError):
        GaSettings(crossover_prob=1.5)
    with pytest.raises(ValueError):
        GaSettings(mode="other")


# --- Algorithm 1 ----------------------------------------------------------------

def test_zero_storage_constraint_is_empty_space():
    with pytest.raises(EmptySpaceError):
        run_algorithm1(SPACE, CF, Constraints(s_const=1), "exhaustive", surrogate())


def test_storage_prefilter_sound_and_monotone():
    loose = run_algorithm1(SPACE, CF, Constraints(s_const=10**7), "exhaustive", surrogate())
    tight = run_algorithm1(SPACE, CF, Constraints(s_const=10**6), "exhaustive", surrogate())
    assert {p.arch for p in tight.evaluated} <= {p.arch for p in loose.evaluated}
    assert all(p.storage_bytes <= 10**6 for p in tight.evaluated)
    assert all(p.storage_bytes <= 10**7 for p in loose.evaluated)
    assert tight.survivors < loose.survivors < 320


def test_quality_postfilter_independence():
    constraints = Constraints(q_const=1.0)
    result = run_algorithm1(SPACE, CF, constraints, "exhaustive", surrogate())
    assert result.omega == []
    assert result.pareto != []


def test_omega_respects_both_constraints():
    constraints = Constraints(s_const=5 * 10**6, q_const=0.9)
    result = run_algorithm1(SPACE, CF, constraints, "tournament", surrogate(),
                            settings=GaSettings(seed=2))
    for p in result.omega:
        assert p.storage_bytes <= 5 * 10**6
        assert p.quality >= 0.9


def test_argmax_invariance_alpha_one():
    cf = CostFunction(1.0, 0.0, S_MAX)
    for seed in range(5):
        result = ga_search(SPACE, cf, GaSettings(seed=seed), "tournament", surrogate())
        assert best_by_fitness(result.evaluated) == best_by_quality(result.evaluated)


def test_argmax_invariance_beta_one():
    cf = CostFunction(0.0, 1.0, S_MAX)
    for seed in range(5):
        result = ga_search(SPACE, cf, GaSettings(seed=seed), "roulette", surrogate())
        best_phi = best_by_fitness(result.evaluated)
        best_s = best_by_storage(result.evaluated)
        assert best_phi.arch == best_s.arch


def test_evaluator_failure_carries_identity_and_partial():
    calls = {"n": 0}
    backend = surrogate()

    def flaky(arch):
        calls["n"] += 1
        if calls["n"] > 5:
            raise RuntimeError("backend exploded")
        return backend(arch)

    with pytest.raises(EvaluationError) as excinfo:
        exhaustive(SPACE, flaky, CF)
    assert excinfo.value.arch is not None
    partial = excinfo.value.partial
    assert partial.unique_eval_calls == 5
    assert len(partial.evaluated) == 5


def test_unique_eval_calls_caps_at_space_size():
    small = SPACE.restrict(lambda a: a.blocks < 2)  # 40 members
    result = ga_search(small, CF, GaSettings(seed=0), "tournament", surrogate())
    assert result.unique_eval_calls <= small.size


def test_result_csv_layout():
    result = exhaustive(SPACE.restrict(lambda a: a.blocks == 0), surrogate(), CF)
    lines = result_csv(result).strip().splitlines()
    assert lines[0] == ("arch,B,x,z,quality,storage_bytes,flops,fitness,"
                        "generation,engine")
    assert len(lines) == 21  # 4 intervals x 5 lstm sizes + header
    assert lines[1].endswith(",exhaustive")
