"""Experiment orchestration: multi-seed runs, parameter sweeps, and a
resumable on-disk record store.

Each (sweep point, seed) pair runs in its own directory under the runs root;
a finished run leaves a ``result.json`` and reruns of the same spec hash are
served from those cached results.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .config import resolve_config
from .data.corpus import load_corpus
from .data.splits import DatasetSplit, split_dataset
from .data.synthetic import SyntheticSpec, generate_synthetic
from .errors import ConfigurationError, DataError
from .trainer import run_training

RUNS_DIR_ENV = "INTERLUDE_RUNS_DIR"
DEFAULT_RUNS_DIR = "runs"


def runs_root(explicit=None) -> Path:
    return Path(explicit or os.environ.get(RUNS_DIR_ENV, DEFAULT_RUNS_DIR))


@dataclass
class ExperimentSpec:
    """A named experiment: dataset, config overrides, seeds, optional grid."""

    name: str
    dataset: dict
    preset: Optional[str] = None
    overrides: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    sweep: Optional[dict] = None

    def __post_init__(self):
        if not self.name:
            raise ConfigurationError("experiment needs a name")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError(f"seeds must be distinct, got {self.seeds}")
        if self.sweep:
            for key, values in self.sweep.items():
                if not isinstance(values, (list, tuple)) or not values:
                    raise ConfigurationError(
                        f"sweep over {key!r} must list at least one value, got {values!r}"
                    )

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        doc = yaml.safe_load(Path(path).read_text())
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{path} must hold a mapping")
        known = {"name", "dataset", "preset", "overrides", "seeds", "sweep"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown experiment keys: {sorted(unknown)}")
        if "dataset" not in doc:
            raise ConfigurationError(f"{path} needs a dataset section")
        return cls(
            name=doc.get("name", Path(path).stem),
            dataset=doc["dataset"],
            preset=doc.get("preset"),
            overrides=doc.get("overrides") or {},
            seeds=list(doc.get("seeds") or [0]),
            sweep=doc.get("sweep"),
        )

    def spec_hash(self) -> str:
        blob = json.dumps(
            {
                "name": self.name,
                "dataset": self.dataset,
                "preset": self.preset,
                "overrides": self.overrides,
                "seeds": self.seeds,
                "sweep": self.sweep,
            },
            sort_keys=True,
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class RunRecord:
    """Aggregated outcome of one sweep point across its seeds."""

    spec_hash: str
    point: dict
    seed_errors: dict
    mean_error: float
    ci95: Optional[float]
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "spec_hash": self.spec_hash,
            "point": self.point,
            "seed_errors": self.seed_errors,
            "mean_error": self.mean_error,
            "ci95": self.ci95,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            spec_hash=d["spec_hash"],
            point=d["point"],
            seed_errors=d["seed_errors"],
            mean_error=d["mean_error"],
            ci95=d["ci95"],
            wall_time=d["wall_time"],
        )


def resolve_dataset(selector: dict, seed_offset: int = 0):
    """Build (split, test_x, test_y) from a dataset selector.

    Two forms: ``{"synthetic": {...generator spec...}}`` or
    ``{"corpus": path, "n_labels": int, ...}`` with an optional
    ``test_corpus`` path. ``seed_offset`` shifts the generation/split seed so
    multi-seed experiments resample the labeled subset.
    """
    if "synthetic" in selector:
        params = dict(selector["synthetic"])
        params["seed"] = int(params.get("seed", 0)) + seed_offset
        spec = SyntheticSpec(**params)
        return generate_synthetic(spec)
    if "corpus" in selector:
        x, y, _ = load_corpus(selector["corpus"])
        n_labels = selector.get("n_labels")
        if n_labels is None:
            raise ConfigurationError("corpus datasets need n_labels")
        split = split_dataset(
            x,
            y,
            n_labels=int(n_labels),
            seed=int(selector.get("seed", 0)) + seed_offset,
            disjoint=bool(selector.get("disjoint", True)),
        )
        test_x = test_y = None
        if selector.get("test_corpus"):
            test_x, test_y, _ = load_corpus(selector["test_corpus"])
        return split, test_x, test_y
    raise ConfigurationError(
        f"dataset selector must contain 'synthetic' or 'corpus', got {sorted(selector)}"
    )


def _point_slug(point: dict) -> str:
    if not point:
        return "base"
    return "_".join(f"{k.replace('.', '-')}={v}" for k, v in sorted(point.items()))


def expand_sweep(sweep: Optional[dict]) -> list:
    if not sweep:
        return [{}]
    keys = sorted(sweep)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(sweep[k] for k in keys))]


def mean_and_ci95(values) -> tuple:
    """Normal-approximation mean +/- 1.96 * sd / sqrt(n); ci is None for n < 2."""
    values = np.asarray(list(values), dtype=np.float64)
    mean = float(values.mean())
    if len(values) < 2:
        return mean, None
    sd = float(values.std(ddof=1))
    return mean, 1.96 * sd / math.sqrt(len(values))


def run_experiment(spec: ExperimentSpec, runs_dir=None, log_every: int = 0) -> list:
    """Execute (or reuse) one run per sweep point and seed; returns RunRecords.

    A run directory that already holds ``result.json`` is not re-executed, so
    rerunning a completed spec is a cached no-op.
    """
    root = runs_root(runs_dir) / f"{spec.name}-{spec.spec_hash()}"
    records = []
    for point in expand_sweep(spec.sweep):
        point_dir = root / _point_slug(point)
        seed_errors = {}
        wall = 0.0
        for seed in spec.seeds:
            run_dir = point_dir / f"seed{seed}"
            result_path = run_dir / "result.json"
            if result_path.exists():
                payload = json.loads(result_path.read_text())
            else:
                overrides = dict(spec.overrides)
                overrides.update(point)
                overrides["seed"] = seed
                cfg = resolve_config(overrides=overrides, preset=spec.preset)
                split, test_x, test_y = resolve_dataset(spec.dataset, seed_offset=seed)
                if test_x is None:
                    raise DataError(
                        f"experiment {spec.name} needs a test set to report error rates"
                    )
                t0 = time.monotonic()
                result = run_training(
                    cfg, split, test_x=test_x, test_y=test_y,
                    run_dir=run_dir, log_every=log_every,
                )
                payload = {
                    "seed": seed,
                    "point": point,
                    "final_error": result.final_error,
                    "best_error": result.best_error,
                    "steps": result.state.step,
                    "wall_time": time.monotonic() - t0,
                }
                result_path.write_text(json.dumps(payload, indent=2))
            seed_errors[str(payload["seed"])] = payload["final_error"]
            wall += payload["wall_time"]
        mean, ci = mean_and_ci95(seed_errors.values())
        records.append(
            RunRecord(
                spec_hash=spec.spec_hash(),
                point=point,
                seed_errors=seed_errors,
                mean_error=mean,
                ci95=ci,
                wall_time=wall,
            )
        )
    (root / "records.json").write_text(
        json.dumps([r.to_dict() for r in records], indent=2)
    )
    return records


def load_records(path) -> list:
    payload = json.loads(Path(path).read_text())
    return [RunRecord.from_dict(d) for d in payload]
