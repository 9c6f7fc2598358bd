"""Labeled/unlabeled split construction and audit manifests."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigurationError, DataError


@dataclass
class DatasetSplit:
    """A labeled pool, an unlabeled pool, and the class inventory.

    ``labeled_x`` / ``unlabeled_x`` are arrays with samples on axis 0 (image
    stacks or feature matrices); ``labeled_y`` holds integer labels in
    [0, num_classes). The index arrays record where each sample sat in the
    source corpus, for audit manifests.
    """

    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray
    num_classes: int
    labeled_indices: Optional[np.ndarray] = None
    unlabeled_indices: Optional[np.ndarray] = None

    def __post_init__(self):
        self.labeled_y = np.asarray(self.labeled_y, dtype=np.int64)
        if len(self.labeled_x) != len(self.labeled_y):
            raise DataError(
                f"{len(self.labeled_x)} labeled samples but {len(self.labeled_y)} labels"
            )
        if len(self.labeled_y) and (
            self.labeled_y.min() < 0 or self.labeled_y.max() >= self.num_classes
        ):
            raise DataError(f"labels outside [0, {self.num_classes})")

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labeled_y, minlength=self.num_classes)


def split_dataset(
    x: np.ndarray,
    y: np.ndarray,
    n_labels: int,
    seed: int,
    num_classes: Optional[int] = None,
    disjoint: bool = True,
) -> DatasetSplit:
    """Select a class-balanced labeled subset; the rest becomes unlabeled.

    Per-class counts differ by at most one (exactly equal when n_labels is
    divisible by the class count); which classes receive a remainder slot and
    which samples are picked are both functions of ``seed`` alone. With
    ``disjoint=False`` the unlabeled pool is the full corpus with labels
    dropped (the common benchmark convention) instead of the complement.
    """
    x = np.asarray(x)
    y = np.asarray(y, dtype=np.int64)
    if len(x) != len(y):
        raise DataError(f"{len(x)} samples but {len(y)} labels")
    c = int(num_classes) if num_classes is not None else int(y.max()) + 1
    if n_labels < c:
        raise ConfigurationError(
            f"n_labels={n_labels} cannot cover {c} classes with at least one sample each"
        )
    if n_labels > len(x):
        raise ConfigurationError(f"n_labels={n_labels} exceeds corpus size {len(x)}")

    rng = np.random.default_rng(seed)
    base, extra = divmod(n_labels, c)
    per_class = np.full(c, base, dtype=np.int64)
    per_class[rng.choice(c, size=extra, replace=False)] += 1

    chosen = []
    for cls in range(c):
        pool = np.flatnonzero(y == cls)
        if len(pool) < per_class[cls]:
            raise DataError(
                f"class {cls} has {len(pool)} samples, need {per_class[cls]} labeled"
            )
        chosen.append(rng.choice(pool, size=per_class[cls], replace=False))
    labeled_idx = np.sort(np.concatenate(chosen))

    if disjoint:
        mask = np.ones(len(x), dtype=bool)
        mask[labeled_idx] = False
        unlabeled_idx = np.flatnonzero(mask)
    else:
        unlabeled_idx = np.arange(len(x))

    return DatasetSplit(
        labeled_x=x[labeled_idx],
        labeled_y=y[labeled_idx],
        unlabeled_x=x[unlabeled_idx],
        num_classes=c,
        labeled_indices=labeled_idx,
        unlabeled_indices=unlabeled_idx,
    )


def write_split_manifest(split: DatasetSplit, path) -> None:
    """Write one JSON record per sample: {index, role, label-or-null}."""
    if split.labeled_indices is None or split.unlabeled_indices is None:
        raise DataError("split carries no source indices; cannot write a manifest")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for idx, label in zip(split.labeled_indices, split.labeled_y):
            fh.write(json.dumps({"index": int(idx), "role": "labeled", "label": int(label)}))
            fh.write("\n")
        for idx in split.unlabeled_indices:
            fh.write(json.dumps({"index": int(idx), "role": "unlabeled", "label": None}))
            fh.write("\n")


def read_split_manifest(path) -> list:
    """Read a manifest back as a list of dicts."""
    records = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
