"""Acceptance suite: one test per top-level criterion, at its stated tolerance.

Each test prints a single PASS line (visible with ``pytest -s`` or ``-v``);
a failing criterion fails its test. The suite needs no external trainer:
everything runs on the surrogate and table evaluators.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from bionas import wfdb
from bionas.archspace import ArchParams, Chromosome, decode, encode, enumerate_space
from bionas.evaluate import SurrogateEvaluator
from bionas.metrics import ConfusionMatrix, accuracy, precision_recall_f1, roc_curve
from bionas.netmodel import NetConfig, build, s_max
from bionas.compress import (
    PruneSpec,
    QuantSpec,
    compression_ratio,
    decompress,
    prune,
    quantize,
)
from bionas.search import (
    Constraints,
    CostFunction,
    EmptySpaceError,
    GA_ENGINES,
    GaSettings,
    best_by_fitness,
    best_by_quality,
    best_by_storage,
    nondominated_sort,
    run_algorithm1,
)

from conftest import make_annotations, make_record, random_store
from test_metrics import pairwise_auc
from test_netmodel import oracle_param_count
from test_search import oracle_fronts

SPACE = enumerate_space()
CFG = NetConfig()
S_MAX = s_max(SPACE, CFG)
CF = CostFunction(0.5, 0.5, S_MAX)


def report(number: int, title: str, detail: str = ""):
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {number:02d} PASS - {title}{suffix}")


def test_criterion_01_space_cardinality():
    start = time.perf_counter()
    space = enumerate_space()
    assert space.size == 320
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0

    # Substitute property for the non-reproducible post-constraint count:
    # the storage filter is monotone and sound.
    rng = np.random.default_rng(1)
    thresholds = sorted(int(10 ** v) for v in rng.uniform(5.2, 13, 12))
    previous: set = set()
    for s_const in thresholds:
        survivors = {
            a for a in space if build(a, CFG).storage_bytes <= s_const
        }
        assert previous <= survivors  # tighter constraint gives a subset
        for arch in survivors:
            assert build(arch, CFG).storage_bytes <= s_const
        previous = survivors
    report(1, "space cardinality 320; storage filter monotone and sound",
           f"{elapsed * 1000:.0f} ms")


def test_criterion_02_genome_roundtrip():
    start = time.perf_counter()
    for arch in SPACE:
        assert decode(encode(arch)) == arch
    invalid = sum(decode(Chromosome.from_int(v)) is None for v in range(512))
    assert invalid == 192
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    report(2, "decode/encode identity over 320; 192 of 512 genomes invalid",
           f"{elapsed * 1000:.0f} ms")


def test_criterion_03_cost_model_oracle():
    hand = {
        ArchParams(0, 1, 4): 3842,
        ArchParams(5, 2, 6): 751970,
        ArchParams(15, 4, 8): 8942434,
    }
    for arch, expected in hand.items():
        assert build(arch, CFG).param_count == expected
        assert oracle_param_count(arch.blocks, arch.filter_interval,
                                  arch.lstm_exp) == expected

    for arch in SPACE:
        assert build(arch, CFG).param_count == oracle_param_count(
            arch.blocks, arch.filter_interval, arch.lstm_exp)

    for x in (1, 2, 3, 4):
        for z in (4, 5, 6, 7, 8):
            params = [build(ArchParams(b, x, z), CFG).param_count for b in range(16)]
            assert all(a < b for a, b in zip(params, params[1:]))
    for b in range(16):
        for x in (1, 2, 3, 4):
            params = [build(ArchParams(b, x, z), CFG).param_count for z in range(4, 9)]
            assert all(a <= b2 for a, b2 in zip(params, params[1:]))
    report(3, "analytical costs match the brute-force enumerator; monotone in B and z")


def test_criterion_04_exploration_cost_reduction():
    start = time.perf_counter()
    summary = []
    for engine in GA_ENGINES:
        calls = []
        for seed in range(10):
            result = run_algorithm1(SPACE, CF, Constraints(), engine,
                                    SurrogateEvaluator(CFG),
                                    settings=GaSettings(seed=seed), cfg=CFG)
            assert result.unique_eval_calls < 320
            calls.append(result.unique_eval_calls)
        mean_reduction = sum(320 / c for c in calls) / len(calls)
        assert mean_reduction >= 3.0, (engine, calls)
        summary.append(f"{engine} {mean_reduction:.1f}x")
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    # The published 9.03x speedup is wall-clock over full training runs and
    # therefore reported rather than asserted; call-count reductions follow:
    report(4, "GA engines explore a strict subset; mean call reduction >= 3x",
           "; ".join(summary) + f"; {elapsed:.1f} s")


def test_criterion_05_dominance_oracle():
    rng = np.random.default_rng(2025)
    for trial in range(100):
        points = [(round(float(q), 2), round(float(s), 2))
                  for q, s in zip(rng.random(50), rng.random(50) * 1000)]
        got = [sorted(front) for front in nondominated_sort(points)]
        expected = [sorted(front) for front in oracle_fronts(points)]
        assert got == expected, trial
    report(5, "non-dominated fronts equal the brute-force oracle on 100 instances")


def test_criterion_06_argmax_invariance():
    for seed in range(10):
        settings = GaSettings(seed=seed)
        quality_first = run_algorithm1(SPACE, CostFunction(1.0, 0.0, S_MAX),
                                       Constraints(), "tournament",
                                       SurrogateEvaluator(CFG), settings=settings,
                                       cfg=CFG)
        top = best_by_fitness(quality_first.evaluated)
        assert top == best_by_quality(quality_first.evaluated)

        storage_first = run_algorithm1(SPACE, CostFunction(0.0, 1.0, S_MAX),
                                       Constraints(), "roulette",
                                       SurrogateEvaluator(CFG), settings=settings,
                                       cfg=CFG)
        assert (best_by_fitness(storage_first.evaluated).arch
                == best_by_storage(storage_first.evaluated).arch)
    report(6, "alpha/beta collapse picks the max-quality / min-storage member")


def test_criterion_07_constraint_soundness():
    rng = np.random.default_rng(7)
    engines = ("exhaustive", "random") + GA_ENGINES
    checked = 0
    for trial in range(24):
        s_const = int(10 ** rng.uniform(5.2, 9))
        q_const = float(rng.uniform(0.7, 1.0))
        engine = engines[trial % len(engines)]
        constraints = Constraints(s_const=s_const, q_const=q_const)
        try:
            result = run_algorithm1(SPACE, CF, constraints, engine,
                                    SurrogateEvaluator(CFG),
                                    settings=GaSettings(seed=trial), cfg=CFG)
        except EmptySpaceError:
            continue
        for point in result.omega:
            assert point.storage_bytes <= s_const
            assert point.quality >= q_const
        checked += 1
    assert checked >= 12
    report(7, "no member of the near-optimal set violates either constraint",
           f"{checked} randomized runs")


def test_criterion_08_compression_accounting():
    rng = np.random.default_rng(42)
    ratios = []
    for trial in range(3):
        store = random_store(100_000, tensors=4, seed=int(rng.integers(1 << 30)))
        pruned, masks = prune(store, PruneSpec(0.9, "class-blind"))
        killed = sum(int((~m).sum()) for m in masks)
        assert killed == math.floor(0.9 * store.total_elements)  # exact to +-0

        cs = quantize(pruned, QuantSpec(bits=4))
        ratio = compression_ratio(store, cs)
        assert ratio >= 20.0
        ratios.append(ratio)

        for tensor in decompress(cs).tensors:
            nonzero = tensor.values[tensor.values != 0]
            assert np.unique(nonzero).size <= 16
    # The published 53x at <0.2% quality loss needs retraining at scale and
    # is deliberately not asserted here.
    report(8, "90% prune + 4-bit quantization reaches >= 20x storage reduction",
           f"ratios {', '.join(f'{r:.1f}x' for r in ratios)}; derived expectation 22.7x")


def test_criterion_09_metrics_oracle():
    cm = ConfusionMatrix(((50, 10), (5, 35)), ("positive", "negative"))
    assert accuracy(cm) == pytest.approx(0.85, abs=1e-4)
    p, r, f1 = precision_recall_f1(cm, 0)
    assert p == pytest.approx(0.9091, abs=1e-4)
    assert r == pytest.approx(0.8333, abs=1e-4)
    assert f1 == pytest.approx(0.8696, abs=1e-4)

    rng = np.random.default_rng(9)
    checked = 0
    for _ in range(50):
        n = int(rng.integers(8, 80))
        scores = np.round(rng.random(n), 1)
        labels = rng.random(n) > 0.5
        if labels.all() or not labels.any():
            continue
        curve = roc_curve(scores, labels)
        assert curve.auc == pytest.approx(pairwise_auc(scores, labels), abs=1e-9)
        checked += 1
    assert checked >= 30
    report(9, "quality equations reproduce the hand values; AUC matches the "
              "pairwise oracle", f"{checked} ROC instances")


def test_criterion_10_wfdb_parsers():
    full_range = np.arange(-2048, 2048, dtype=np.int64)
    np.testing.assert_array_equal(
        wfdb.decode_212(wfdb.encode_212(full_range)), full_range)

    rng = np.random.default_rng(10)
    beat_codes = [wfdb.SYMBOL_CODES[s] for s in "NLRVAJE"]
    for trial in range(100):
        time_cursor = 0
        annotations = []
        for _ in range(int(rng.integers(1, 30))):
            time_cursor += int(rng.integers(1, 4000))
            aux = bytes(rng.integers(32, 127, int(rng.integers(0, 6))).tolist())
            annotations.append(wfdb.Annotation(time_cursor,
                                               int(rng.choice(beat_codes)), aux))
        stream = wfdb.serialize_annotations(annotations)
        assert wfdb.parse_annotations(stream) == annotations, trial

    record = make_record(num_samples=100 * 256)
    pairs = [(record, make_annotations(["N"] * 100))]
    ds = wfdb.build_dataset(pairs, wfdb.DEFAULT_TASKS["DNN1"], seed=3)
    counts = ds.counts()
    assert abs(counts["train"] - 70) <= 1
    assert abs(counts["val"] - 10) <= 1
    assert abs(counts["test"] - 20) <= 1
    again = wfdb.build_dataset(pairs, wfdb.DEFAULT_TASKS["DNN1"], seed=3)
    assert ds.splits == again.splits
    report(10, "212 and annotation codecs roundtrip; splits are 70/10/20 and seeded")


def test_criterion_11_search_run_determinism(tmp_path):
    args = [sys.executable, "-m", "bionas.cli", "search", "--engine", "nsga2",
            "--seed", "123", "--alpha", "0.4", "--beta", "0.6",
            "--evaluator", "surrogate"]
    for out in ("first", "second"):
        proc = subprocess.run(args + ["--out", str(tmp_path / out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
    names = ("evaluated.csv", "pareto.csv", "omega.csv", "manifest.json")
    for name in names:
        first = (tmp_path / "first" / name).read_bytes()
        second = (tmp_path / "second" / name).read_bytes()
        assert first == second, name
    report(11, "two identical search runs emit byte-identical output files")
