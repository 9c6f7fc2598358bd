"""Synthetic 2-D two-class datasets for fast CPU experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.datasets import make_moons

from ..errors import ConfigurationError
from .splits import DatasetSplit

GENERATORS = ("two-gaussians", "two-moons")

_GAUSSIAN_MEANS = np.array([[-2.0, 0.0], [2.0, 0.0]])


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a generated dataset: balanced labeled, unlabeled and test
    pools drawn from one of the 2-D generators."""

    generator: str = "two-moons"
    n_labeled: int = 4
    n_unlabeled: int = 2000
    n_test: int = 2000
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ConfigurationError(
                f"unknown generator {self.generator!r}; expected one of {GENERATORS}"
            )
        for name in ("n_labeled", "n_unlabeled", "n_test"):
            value = getattr(self, name)
            if value <= 0:
                raise ConfigurationError(f"{name} must be positive, got {value}")
            if value % 2 != 0:
                raise ConfigurationError(f"{name} must be even for balanced classes, got {value}")
        if self.noise < 0:
            raise ConfigurationError(f"noise must be >= 0, got {self.noise}")


def _draw(generator: str, n: int, noise: float, rng: np.random.Generator):
    half = n // 2
    if generator == "two-moons":
        seed = int(rng.integers(0, 2**31 - 1))
        x, y = make_moons(n_samples=(half, half), noise=noise or None, random_state=seed)
    else:
        y = np.repeat(np.arange(2), half)
        x = _GAUSSIAN_MEANS[y] + noise * rng.standard_normal((n, 2))
    order = rng.permutation(n)
    return x[order].astype(np.float64), y[order].astype(np.int64)


def generate_synthetic(spec: SyntheticSpec):
    """Generate (DatasetSplit, test_x, test_y), deterministic under the seed.

    A training pool of n_labeled + n_unlabeled points is drawn, then a
    balanced labeled subset is selected at random; the complement becomes the
    unlabeled pool (labels dropped). The test pool is drawn separately.
    """
    from .splits import split_dataset

    rng = np.random.default_rng(spec.seed)
    pool_x, pool_y = _draw(spec.generator, spec.n_labeled + spec.n_unlabeled, spec.noise, rng)
    test_x, test_y = _draw(spec.generator, spec.n_test, spec.noise, rng)
    split = split_dataset(
        pool_x,
        pool_y,
        n_labels=spec.n_labeled,
        seed=int(rng.integers(0, 2**31 - 1)),
        num_classes=2,
    )
    return split, test_x, test_y
