"""Command-line entry point for reproducible search, dataset and compression runs.

Exit codes for ``search``: 0 success, 2 storage constraint removed every
architecture, 3 evaluator failure, 4 quality constraint left the
near-optimal set empty (output files are still written).

A run can be driven by ``--config FILE`` (YAML, keys below) with any
command-line flag overriding the file value:

    engine: nsga2              # exhaustive|random|roulette|tournament|nsga2|spea2
    alpha: 0.5
    beta: 0.5
    s_const_bytes: 250000000   # optional storage constraint
    q_const: 0.9               # optional quality constraint
    metric: accuracy           # accuracy|precision|recall|f1
    target_class: PVC          # for per-class metrics
    seed: 42
    evaluator: surrogate       # surrogate | table:<csv> | external:<command>
    out: runs/example
    fraction: 0.10             # random engine sample fraction
    ga:
      population_size: 30
      generations: 5
      crossover_prob: 0.4
      mutation_prob: 0.11
      mode: multi-objective    # or scalarized
    net:
      input_len: 256
      input_channels: 1
      num_classes: 2
    task:
      classes: [Normal, Anomaly]
      dataset: path/to/dataset.bin
      id: DNN1
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__, archspace, compress, evaluate, metrics, netmodel, search, wfdb

EXIT_EMPTY_SPACE = 2
EXIT_EVALUATOR_FAILURE = 3
EXIT_CONSTRAINT_UNSATISFIABLE = 4


def main(argv=None):
    return cli(args=argv, standalone_mode=True)


@click.group()
@click.version_option(version=__version__)
def cli():
    """Architecture-space exploration for bounded bio-signal DNNs."""


# --- space ------------------------------------------------------------------

@cli.group()
def space():
    """Enumerate and describe the architecture space."""


@space.command("list")
@click.option("--s-const-bytes", type=int, default=None, help="Drop members above this storage.")
@click.option("--classes", "num_classes", type=int, default=2, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write CSV here instead of stdout.")
def space_list(s_const_bytes, num_classes, out):
    """CSV of every architecture with its analytical costs."""
    cfg = netmodel.NetConfig(num_classes=num_classes)
    lines = ["arch,B,x,z,params,storage_bytes,flops"]
    for arch in archspace.enumerate_space():
        summary = netmodel.build(arch, cfg)
        if s_const_bytes is not None and summary.storage_bytes > s_const_bytes:
            continue
        lines.append(f"{archspace.encode(arch).bits},{arch.blocks},{arch.filter_interval},"
                     f"{arch.lstm_exp},{summary.param_count},{summary.storage_bytes},"
                     f"{summary.flops}")
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


@space.command("describe")
@click.option("--arch", "arch_text", required=True, help='Architecture, e.g. "B=5,x=2,z=6".')
@click.option("--classes", "num_classes", type=int, default=2, show_default=True)
def space_describe(arch_text, num_classes):
    """Per-layer cost table for one architecture."""
    try:
        arch = archspace.ArchParams.from_text(arch_text)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    summary = netmodel.build(arch, netmodel.NetConfig(num_classes=num_classes))
    click.echo(netmodel.describe_csv(summary), nl=False)


# --- search -----------------------------------------------------------------

def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise click.ClickException(f"config {path} must be a mapping")
    return data


def _merged(config: dict, key: str, flag_value, default):
    if flag_value is not None:
        return flag_value
    return config.get(key, default)


def _build_evaluator(spec: str, cfg: netmodel.NetConfig, task: evaluate.EvalTask,
                     seed: int, cache_path):
    if spec == "surrogate":
        backend = evaluate.SurrogateEvaluator(cfg, seed=seed, classes=task.classes)
    elif spec.startswith("table:"):
        backend = evaluate.TableEvaluator.from_csv(spec[len("table:"):])
    elif spec.startswith("external:"):
        backend = evaluate.ExternalEvaluator(spec[len("external:"):], task=task)
    else:
        raise click.ClickException(f"unknown evaluator {spec!r}")
    if cache_path is not None:
        return evaluate.CachedEvaluator(backend, cache_path, task=task)
    return backend


def _close_evaluator(evaluator):
    backend = getattr(evaluator, "backend", evaluator)
    close = getattr(backend, "close", None)
    if close is not None:
        close()


@cli.command("search")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--engine", type=click.Choice(search.ENGINES), default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--s-const-bytes", type=int, default=None)
@click.option("--q-const", type=float, default=None)
@click.option("--metric", type=click.Choice(["accuracy", "precision", "recall", "f1"]),
              default=None)
@click.option("--target-class", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--evaluator", "evaluator_spec", default=None,
              help="surrogate | table:<csv> | external:<command>")
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), default=None,
              help="Persistent evaluator result cache file.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
def cmd_search(config_path, engine, alpha, beta, s_const_bytes, q_const, metric,
               target_class, seed, evaluator_spec, cache_path, out_dir):
    """Run the weighted architecture search end to end.

    Writes evaluated.csv, pareto.csv, omega.csv and manifest.json into the
    output directory.
    """
    config = _load_config(config_path)
    engine = _merged(config, "engine", engine, "exhaustive")
    alpha = float(_merged(config, "alpha", alpha, 0.5))
    beta = float(_merged(config, "beta", beta, 0.5))
    s_const = _merged(config, "s_const_bytes", s_const_bytes, None)
    q_const = _merged(config, "q_const", q_const, None)
    metric = _merged(config, "metric", metric, "accuracy")
    target_class = _merged(config, "target_class", target_class, None)
    seed = int(_merged(config, "seed", seed, 0))
    evaluator_spec = _merged(config, "evaluator", evaluator_spec, "surrogate")
    cache_path = _merged(config, "cache", cache_path, None)
    out_dir = Path(_merged(config, "out", out_dir, "run-output"))
    fraction = float(config.get("fraction", 0.10))

    net_cfg_fields = config.get("net", {})
    cfg = netmodel.NetConfig(**net_cfg_fields)
    task_fields = config.get("task", {})
    task = evaluate.EvalTask(
        classes=tuple(task_fields.get("classes", ("Normal", "Anomaly"))),
        dataset=task_fields.get("dataset", ""),
        task_id=task_fields.get("id", ""),
    )
    ga_fields = dict(config.get("ga", {}))
    ga_fields["seed"] = seed
    settings = search.GaSettings(**ga_fields)

    space_ = archspace.enumerate_space()
    cf = search.CostFunction(alpha=alpha, beta=beta, s_max=netmodel.s_max(space_, cfg))
    constraints = search.Constraints(
        s_const=s_const, q_const=q_const, metric=metric, target_class=target_class)
    evaluator = _build_evaluator(evaluator_spec, cfg, task, seed, cache_path)

    try:
        result = search.run_algorithm1(space_, cf, constraints, engine, evaluator,
                                       settings=settings, cfg=cfg, fraction=fraction)
    except search.EmptySpaceError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_EMPTY_SPACE)
    except evaluate.EvaluationError as exc:
        click.echo(f"error: {exc}", err=True)
        partial = getattr(exc, "partial", None)
        if partial is not None:
            _write_outputs(partial, cf, constraints, settings, out_dir, _run_config_dict(
                engine, alpha, beta, s_const, q_const, metric, target_class, seed,
                evaluator_spec, fraction, cfg, task))
            click.echo(f"partial results written to {out_dir}", err=True)
        sys.exit(EXIT_EVALUATOR_FAILURE)
    finally:
        _close_evaluator(evaluator)

    _write_outputs(result, cf, constraints, settings, out_dir, _run_config_dict(
        engine, alpha, beta, s_const, q_const, metric, target_class, seed,
        evaluator_spec, fraction, cfg, task))
    top = search.best_by_fitness(result.evaluated)
    click.echo(f"evaluated {result.unique_eval_calls} unique architectures "
               f"({result.survivors} survivors of {result.space_size}); "
               f"pareto {len(result.pareto)}, omega {len(result.omega)}")
    click.echo(f"best fitness {top.fitness:.6f} at {top.arch.text()}")
    if q_const is not None and not result.omega:
        click.echo("error: no architecture satisfies the quality constraint", err=True)
        sys.exit(EXIT_CONSTRAINT_UNSATISFIABLE)


def _run_config_dict(engine, alpha, beta, s_const, q_const, metric, target_class,
                     seed, evaluator_spec, fraction, cfg, task) -> dict:
    # The output directory is deliberately absent: manifests must not differ
    # between runs that only write to different places.
    return {
        "version": __version__,
        "run_config": {
            "engine": engine,
            "alpha": alpha,
            "beta": beta,
            "s_const_bytes": s_const,
            "q_const": q_const,
            "metric": metric,
            "target_class": target_class,
            "seed": seed,
            "evaluator": evaluator_spec,
            "fraction": fraction,
            "net": {
                "input_len": cfg.input_len,
                "input_channels": cfg.input_channels,
                "num_classes": cfg.num_classes,
            },
            "task": {"id": task.task_id, "classes": list(task.classes),
                     "dataset": task.dataset},
        },
    }


def _write_outputs(result, cf, constraints, settings, out_dir: Path, extra: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "evaluated.csv").write_text(search.result_csv(result))
    (out_dir / "pareto.csv").write_text(search.result_csv(result, result.pareto))
    (out_dir / "omega.csv").write_text(search.result_csv(result, result.omega))
    (out_dir / "manifest.json").write_text(
        search.run_manifest(result, cf, constraints, settings, extra))


# --- dataset ----------------------------------------------------------------

@cli.command("dataset")
@click.option("--task", "task_id", type=click.Choice(sorted(wfdb.DEFAULT_TASKS)),
              required=True)
@click.option("--record", "record_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Path to a .hea header; .dat and .atr are siblings.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--unmapped", type=click.Choice(["other", "drop"]), default="other",
              show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def cmd_dataset(task_id, record_paths, seed, unmapped, out_path):
    """Build a windowed dataset from WFDB records."""
    task = wfdb.DEFAULT_TASKS[task_id]
    pairs = []
    for hea in record_paths:
        record = wfdb.load_record(hea)
        annotations = wfdb.load_annotations(Path(hea).with_suffix(".atr"))
        pairs.append((record, annotations))
    try:
        dataset = wfdb.build_dataset(pairs, task, seed=seed, unmapped=unmapped)
    except wfdb.EmptyDatasetError as exc:
        raise click.ClickException(str(exc)) from exc
    wfdb.save_dataset(dataset, out_path)
    counts = dataset.counts()
    click.echo(f"{len(dataset.windows)} windows -> train {counts['train']}, "
               f"val {counts['val']}, test {counts['test']} (classes: "
               f"{', '.join(dataset.classes)})")


# --- compress ----------------------------------------------------------------

@cli.command("compress")
@click.option("--weights", "weights_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Uncompressed tensor store (BNXW file).")
@click.option("--fraction", type=float, default=0.0, show_default=True)
@click.option("--mode", type=click.Choice(["layer-wise", "class-blind"]),
              default="class-blind", show_default=True)
@click.option("--bits", type=int, default=8, show_default=True)
@click.option("--codebook", type=click.Choice(["spaced", "centroid"]), default="spaced",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def cmd_compress(weights_path, fraction, mode, bits, codebook, seed, out_path):
    """Prune then quantize a weight store; prints the storage reduction."""
    store = compress.parse_weights(Path(weights_path).read_bytes())
    pruned, _ = compress.prune(store, compress.PruneSpec(fraction, mode))
    cs = compress.quantize(pruned, compress.QuantSpec(bits, codebook), seed=seed)
    blob = compress.serialize_compressed(cs)
    Path(out_path).write_bytes(blob)
    ratio = store.dense_bytes / len(blob)
    click.echo(f"dense {store.dense_bytes} bytes -> container {len(blob)} bytes "
               f"({ratio:.1f}x reduction)")


# --- metrics -----------------------------------------------------------------

def _read_confusion_csv(path) -> metrics.ConfusionMatrix:
    rows = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    if not rows:
        raise click.ClickException(f"{path}: empty confusion matrix")
    labels = tuple(cell.strip() for cell in rows[0].split(","))
    counts = []
    for line in rows[1:]:
        counts.append(tuple(int(cell) for cell in line.split(",")))
    try:
        return metrics.ConfusionMatrix(tuple(counts), labels)
    except ValueError as exc:
        raise click.ClickException(f"{path}: {exc}") from exc


@cli.command("metrics")
@click.option("--confusion", "confusion_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="CSV: class-label header row, then the count grid.")
@click.option("--roc-scores", type=click.Path(exists=True, dir_okay=False), default=None,
              help="CSV: header 'label,<class>,...'; per-sample true label and scores.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--roc-out", type=click.Path(dir_okay=False), default=None)
def cmd_metrics(confusion_path, roc_scores, out_path, roc_out):
    """Quality metrics (and optional ROC curves) from saved results."""
    cm = _read_confusion_csv(confusion_path)
    report = metrics.report_from_confusion(cm)
    text = metrics.metrics_csv(report)
    if out_path:
        Path(out_path).write_text(text)
    else:
        click.echo(text, nl=False)

    if roc_scores:
        rows = [line.strip() for line in Path(roc_scores).read_text().splitlines()
                if line.strip()]
        header = [cell.strip() for cell in rows[0].split(",")]
        if header[0] != "label":
            raise click.ClickException("ROC scores CSV must start with a 'label' column")
        class_names = header[1:]
        labels = []
        scores = []
        for line in rows[1:]:
            cells = line.split(",")
            labels.append(cells[0].strip())
            scores.append([float(c) for c in cells[1:]])
        matrix = np.asarray(scores)
        curves = []
        for column, name in enumerate(class_names):
            flags = [label == name for label in labels]
            try:
                curves.append(metrics.roc_curve(matrix[:, column], flags, name))
            except ValueError as exc:
                raise click.ClickException(f"class {name}: {exc}") from exc
        roc_text = metrics.roc_csv(curves)
        if roc_out:
            Path(roc_out).write_text(roc_text)
        else:
            click.echo(roc_text, nl=False)
        for curve in curves:
            click.echo(f"auc {curve.label}: {curve.auc:.6f}", err=True)


if __name__ == "__main__":
    main()
