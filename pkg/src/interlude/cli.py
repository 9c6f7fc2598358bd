"""Command-line harness: split datasets, train, evaluate, sweep, and plot.

Config values can be overridden on any training command with dotted flags,
e.g. ``--loss.lambda_dc=0.5``. Exit codes: 0 success, 2 configuration error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import json
import sys
from functools import wraps
from pathlib import Path

import click

from .config import PRESETS, parse_override_tokens, resolve_config, load_config_document
from .data.corpus import load_corpus
from .data.splits import split_dataset, write_split_manifest
from .errors import InterludeError
from .experiments import (
    ExperimentSpec,
    load_records,
    resolve_dataset,
    run_experiment,
    runs_root,
    RUNS_DIR_ENV,
)
from .plotting import KINDS, emit_plots, plot_from_csv
from .trainer import evaluate, load_checkpoint, run_training

_OVERRIDE_SETTINGS = {"ignore_unknown_options": True, "allow_extra_args": True}


def _handle_errors(fn):
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InterludeError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


@click.group()
def main():
    """Semi-supervised training with interdigitated labeled-unlabeled batches."""


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(), help="Corpus directory or .npz archive.")
@click.option("--n-labels", required=True, type=int, help="Size of the labeled subset.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--disjoint/--no-disjoint", default=True, show_default=True,
              help="Whether the unlabeled pool excludes the labeled samples.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Manifest output path (.jsonl).")
@_handle_errors
def split(data_path, n_labels, seed, disjoint, out_path):
    """Build a class-balanced labeled/unlabeled split and write its manifest."""
    x, y, _ = load_corpus(data_path)
    result = split_dataset(x, y, n_labels=n_labels, seed=seed, disjoint=disjoint)
    write_split_manifest(result, out_path)
    counts = ", ".join(str(c) for c in result.class_counts)
    click.echo(
        f"labeled={len(result.labeled_y)} (per class: {counts}) "
        f"unlabeled={len(result.unlabeled_x)} -> {out_path}"
    )


@main.command(context_settings=_OVERRIDE_SETTINGS)
@click.argument("config_path", type=click.Path())
@click.argument("overrides", nargs=-1, type=click.UNPROCESSED)
@click.option("--preset", default=None, help=f"One of: {', '.join(sorted(PRESETS))}.")
@click.option("--runs-dir", envvar=RUNS_DIR_ENV, default=None,
              help=f"Run-directory root (or ${RUNS_DIR_ENV}).")
@click.option("--name", default="train", show_default=True, help="Run directory name.")
@click.option("--log-every", default=100, type=int, show_default=True)
@_handle_errors
def train(config_path, overrides, preset, runs_dir, name, log_every):
    """Train from a YAML config with a dataset section."""
    doc = load_config_document(config_path)
    dataset = doc.pop("dataset", None)
    if dataset is None:
        raise click.UsageError("config file needs a dataset section")
    cfg = resolve_config(doc, preset=preset, overrides=parse_override_tokens(overrides))
    split_data, test_x, test_y = resolve_dataset(dataset)
    run_dir = runs_root(runs_dir) / name
    result = run_training(
        cfg, split_data, test_x=test_x, test_y=test_y, run_dir=run_dir, log_every=log_every
    )
    summary = {
        "steps": result.state.step,
        "final_error": result.final_error,
        "run_dir": str(run_dir),
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    click.echo(json.dumps(summary))


@main.command("eval")
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Config file providing the dataset section to evaluate on.")
@click.option("--live", is_flag=True, help="Evaluate the live weights instead of the EMA shadow.")
@_handle_errors
def eval_cmd(ckpt_path, config_path, live):
    """Evaluate a checkpoint on a dataset's test split."""
    doc = load_config_document(config_path)
    dataset = doc.get("dataset")
    if dataset is None:
        raise click.UsageError("config file needs a dataset section")
    _, test_x, test_y = resolve_dataset(dataset)
    if test_x is None:
        raise click.UsageError("dataset selector provides no test data")
    state, _ = load_checkpoint(ckpt_path)
    error, per_class = evaluate(state, test_x, test_y, use_ema=not live)
    click.echo(json.dumps({
        "error_rate": error,
        "per_class_errors": [None if p != p else p for p in per_class],
        "step": state.step,
    }))


@main.command()
@click.argument("spec_path", type=click.Path())
@click.option("--runs-dir", envvar=RUNS_DIR_ENV, default=None)
@click.option("--log-every", default=0, type=int, show_default=True)
@_handle_errors
def sweep(spec_path, runs_dir, log_every):
    """Run a multi-seed experiment spec, reusing completed runs."""
    spec = ExperimentSpec.from_file(spec_path)
    records = run_experiment(spec, runs_dir=runs_dir, log_every=log_every)
    for rec in records:
        ci = f" +/- {rec.ci95:.4f}" if rec.ci95 is not None else ""
        click.echo(f"{rec.point or 'base'}: error {rec.mean_error:.4f}{ci}")
    root = runs_root(runs_dir) / f"{spec.name}-{spec.spec_hash()}"
    click.echo(f"records: {root / 'records.json'}")


@main.command()
@click.option("--kind", required=True, type=click.Choice(KINDS))
@click.option("--records", "records_path", default=None, type=click.Path(),
              help="records.json from a sweep (sensitivity / layout-ablation).")
@click.option("--metrics", "metrics_path", default=None, type=click.Path(),
              help="metrics.jsonl from a run (learning-curve).")
@click.option("--from-csv", "csv_path", default=None, type=click.Path(),
              help="Regenerate the image from an existing data file.")
@click.option("--out-dir", default=".", type=click.Path(), show_default=True)
@click.option("--name", default=None)
@_handle_errors
def plot(kind, records_path, metrics_path, csv_path, out_dir, name):
    """Emit a plot image plus the data file it is drawn from."""
    if csv_path is not None:
        png = Path(out_dir) / f"{name or kind}.png"
        plot_from_csv(csv_path, kind, png)
        click.echo(f"wrote {png}")
        return
    if records_path is not None:
        records = load_records(records_path)
    elif metrics_path is not None:
        records = [json.loads(line) for line in Path(metrics_path).read_text().splitlines() if line]
    else:
        raise click.UsageError("provide --records, --metrics, or --from-csv")
    png, csv_file = emit_plots(records, kind, out_dir, name=name)
    click.echo(f"wrote {png} and {csv_file}")


@main.command("validate-config", context_settings=_OVERRIDE_SETTINGS)
@click.argument("config_path", type=click.Path())
@click.argument("overrides", nargs=-1, type=click.UNPROCESSED)
@click.option("--preset", default=None)
@_handle_errors
def validate_config_cmd(config_path, overrides, preset):
    """Resolve a config file against defaults and print the result."""
    from .config import validate_config

    cfg = validate_config(config_path, preset=preset, overrides=parse_override_tokens(overrides))
    click.echo(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
