"""Embedding fusion: replace each row of an embedding matrix with a convex
combination of itself and its circular successor.

The operator is ``Z' = (I + A) Z`` with ``A = alpha * U - alpha * I`` where
``U`` is the circular one-step shift, so row i of the fused output is
``(1 - alpha) * z_i + alpha * z_{(i+1) mod Q}``. A valid operator must be
full rank, strictly diagonally dominant per row, and row-L1-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .errors import ConfigurationError

# Strength must stay below 0.5 so the diagonal strictly dominates the row.
ALPHA_MIN = 0.0
ALPHA_MAX = 0.5

CIRCULAR_SHIFT = "circular-shift"
CUSTOM_MATRIX = "custom-matrix"


@dataclass(frozen=True)
class FusionPlan:
    """A validated (I + A) operator of a fixed size.

    ``matrix`` is only stored for custom operators; circular-shift plans are
    applied in closed form and materialized on demand.
    """

    size: int
    alpha: float
    kind: str = CIRCULAR_SHIFT
    matrix: Optional[np.ndarray] = None

    def materialize(self) -> np.ndarray:
        """Return the dense Q x Q operator (test oracle; not the hot path)."""
        if self.kind == CUSTOM_MATRIX:
            return np.array(self.matrix, dtype=np.float64, copy=True)
        mat = (1.0 - self.alpha) * np.eye(self.size)
        for i in range(self.size):
            mat[i, (i + 1) % self.size] += self.alpha
        return mat


@dataclass(frozen=True)
class ValidationReport:
    """Measured operator properties against the three construction rules."""

    full_rank: bool
    diagonally_dominant: bool
    rows_l1_normalized: bool
    min_singular_value: float
    min_dominance_margin: float
    max_l1_deviation: float

    @property
    def passed(self) -> bool:
        return self.full_rank and self.diagonally_dominant and self.rows_l1_normalized


def build_circular_shift(size: int, alpha: float, validate: bool = True) -> FusionPlan:
    """Build the circular-shift fusion plan of a given size and strength.

    ``validate=False`` admits alpha outside (0, 0.5); only the alpha=0
    identity plan is a sensible use for that (tests, ablations).
    """
    if size < 2:
        raise ConfigurationError(f"fusion operator needs size >= 2, got {size}")
    if validate and not (ALPHA_MIN < alpha < ALPHA_MAX):
        raise ConfigurationError(
            f"fusion strength alpha must lie in (0, 0.5), got {alpha}"
        )
    return FusionPlan(size=size, alpha=float(alpha), kind=CIRCULAR_SHIFT)


def custom_plan(matrix: np.ndarray) -> FusionPlan:
    """Wrap an explicit dense operator; validate with validate_desiderata."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ConfigurationError(f"custom operator must be square, got {matrix.shape}")
    return FusionPlan(size=matrix.shape[0], alpha=float("nan"), kind=CUSTOM_MATRIX, matrix=matrix)


def validate_desiderata(
    plan: FusionPlan,
    rank_tol: float = 1e-9,
    l1_tol: float = 1e-9,
) -> ValidationReport:
    """Check full rank, strict row dominance, and unit row L1 norms.

    Reports measured values instead of raising so degenerate custom
    operators can be inspected.
    """
    mat = plan.materialize()
    n = mat.shape[0]

    singular_values = np.linalg.svd(mat, compute_uv=False)
    min_sv = float(singular_values.min())
    full_rank = min_sv > rank_tol

    margins = []
    for i in range(n):
        row = np.delete(mat[i], i)
        margins.append(mat[i, i] - row.max() if n > 1 else np.inf)
    min_margin = float(min(margins))
    dominant = min_margin > 0.0

    l1_dev = float(np.abs(np.abs(mat).sum(axis=1) - 1.0).max())
    normalized = l1_dev <= l1_tol

    return ValidationReport(
        full_rank=full_rank,
        diagonally_dominant=dominant,
        rows_l1_normalized=normalized,
        min_singular_value=min_sv,
        min_dominance_margin=min_margin,
        max_l1_deviation=l1_dev,
    )


def circulant_eigenvalues(plan: FusionPlan) -> np.ndarray:
    """Closed-form spectrum (1 - alpha) + alpha * w^k over the Q-th roots of unity."""
    if plan.kind != CIRCULAR_SHIFT:
        raise ConfigurationError("closed-form spectrum only exists for circular-shift plans")
    k = np.arange(plan.size)
    roots = np.exp(2j * np.pi * k / plan.size)
    return (1.0 - plan.alpha) + plan.alpha * roots


def apply_fusion(embeddings, plan: FusionPlan):
    """Apply the fusion operator to a (Q, D) embedding matrix.

    Torch inputs stay in the autograd graph; numpy inputs are handled for
    oracles and tests. Circular-shift plans use the O(QD) two-term row
    update rather than a dense multiply.
    """
    rows = embeddings.shape[0]
    if rows != plan.size:
        raise ConfigurationError(
            f"fusion plan of size {plan.size} cannot act on {rows} embedding rows"
        )
    if plan.kind == CIRCULAR_SHIFT:
        if isinstance(embeddings, torch.Tensor):
            shifted = torch.roll(embeddings, shifts=-1, dims=0)
        else:
            shifted = np.roll(embeddings, shift=-1, axis=0)
        return (1.0 - plan.alpha) * embeddings + plan.alpha * shifted
    mat = plan.materialize()
    if isinstance(embeddings, torch.Tensor):
        op = torch.as_tensor(mat, dtype=embeddings.dtype, device=embeddings.device)
        return op @ embeddings
    return mat @ embeddings
