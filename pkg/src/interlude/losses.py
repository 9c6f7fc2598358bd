"""Training objective: supervised cross-entropy, thresholded instance-wise
consistency, cross-instance delta consistency, and their weighted sum.

All functions take probability vectors (post-softmax), operate on torch
tensors so they participate in autograd, and clamp log arguments at 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import torch

from .errors import ConfigurationError

LOG_FLOOR = 1e-12

TensorLike = Union[torch.Tensor, np.ndarray]


@dataclass
class GroupedPredictions:
    """Per-group predictions: for each labeled index i, its weak/strong
    probabilities and the weak/strong probabilities of its mu unlabeled
    group members.

    Shapes: p_w, p_s are (B, C); q_w, q_s are (B, mu, C); y is (B,).
    """

    p_w: TensorLike
    p_s: TensorLike
    q_w: TensorLike
    q_s: TensorLike
    y: Optional[TensorLike] = None

    @property
    def batch_size(self) -> int:
        return self.p_w.shape[0]

    @property
    def mu(self) -> int:
        return self.q_w.shape[1]

    @property
    def num_classes(self) -> int:
        return self.p_w.shape[-1]

    def q_w_flat(self):
        return self.q_w.reshape(-1, self.num_classes)

    def q_s_flat(self):
        return self.q_s.reshape(-1, self.num_classes)

    def validate(self, atol: float = 1e-6) -> None:
        """Check simplex membership and shape consistency; raises on violation."""
        b, c = self.p_w.shape
        if self.p_s.shape != (b, c):
            raise ValueError(f"p_s shape {tuple(self.p_s.shape)} != {(b, c)}")
        if self.q_w.shape != self.q_s.shape or self.q_w.shape[::2] != (b, c):
            raise ValueError(
                f"q shapes {tuple(self.q_w.shape)}/{tuple(self.q_s.shape)} "
                f"inconsistent with (B={b}, mu, C={c})"
            )
        for name in ("p_w", "p_s", "q_w", "q_s"):
            arr = getattr(self, name)
            arr = arr.detach().cpu().numpy() if isinstance(arr, torch.Tensor) else np.asarray(arr)
            if (arr < -atol).any():
                raise ValueError(f"{name} has negative entries")
            if np.abs(arr.sum(axis=-1) - 1.0).max() > atol:
                raise ValueError(f"{name} rows do not sum to 1 within {atol}")
        if self.y is not None:
            y = np.asarray(self.y if not isinstance(self.y, torch.Tensor) else self.y.cpu())
            if len(y) != b:
                raise ValueError(f"{len(y)} labels for batch size {b}")
            if y.min() < 0 or y.max() >= c:
                raise ValueError(f"labels outside [0, {c})")


@dataclass
class LossBreakdown:
    """The objective's components and their weighted total.

    Fields hold whatever scalar type the loss functions produced (0-dim torch
    tensors during training, floats in logs); ``total`` always equals
    l_sup + lambda_u * l_unsup + lambda_dc * l_dc + lambda_saf * l_saf for
    the weights it was built with.
    """

    l_sup: Union[float, torch.Tensor]
    l_unsup: Union[float, torch.Tensor]
    l_dc: Union[float, torch.Tensor]
    total: Union[float, torch.Tensor]
    l_saf: Union[float, torch.Tensor] = 0.0
    mask_rate: float = 0.0

    def as_floats(self) -> "LossBreakdown":
        def item(v):
            return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)

        return LossBreakdown(
            l_sup=item(self.l_sup),
            l_unsup=item(self.l_unsup),
            l_dc=item(self.l_dc),
            l_saf=item(self.l_saf),
            total=item(self.total),
            mask_rate=float(self.mask_rate),
        )


def _as_tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x))


def supervised_loss(p_w, y) -> torch.Tensor:
    """Mean negative log-likelihood of the true labels under the weak-view
    labeled probabilities: -(1/B) * sum_i log p_i^w[y_i]."""
    p_w = _as_tensor(p_w)
    y = _as_tensor(y).long()
    c = p_w.shape[-1]
    if y.numel() and (y.min() < 0 or y.max() >= c):
        raise ConfigurationError(f"label outside [0, {c}): {y.min()}..{y.max()}")
    picked = p_w[torch.arange(p_w.shape[0]), y]
    return -torch.log(picked.clamp_min(LOG_FLOOR)).mean()


def instance_consistency_loss(q_w, q_s, thresholds, hard: bool = True):
    """Confidence-masked consistency between weak and strong unlabeled views.

    Each sample whose weak confidence clears its threshold contributes the
    cross-entropy between its weak-view pseudo-label (hard argmax by
    default) and its strong-view probabilities; the sum is averaged over all
    mu*B samples, masked or not. No gradient flows through the weak view.

    ``thresholds`` is either a scalar tau (strict ``>`` comparison) or a
    per-class vector indexed by the weak argmax (``>=`` comparison, the
    convention of the self-adaptive variant).

    Returns (loss, mask_rate).
    """
    q_w = _as_tensor(q_w)
    q_s = _as_tensor(q_s)
    c = q_w.shape[-1]
    q_w = q_w.reshape(-1, c)
    q_s = q_s.reshape(-1, c)
    if q_w.shape != q_s.shape:
        raise ConfigurationError(
            f"weak/strong prediction shapes differ: {tuple(q_w.shape)} vs {tuple(q_s.shape)}"
        )
    n = q_w.shape[0]

    q_w_det = q_w.detach()
    confidence, pseudo = q_w_det.max(dim=1)
    if isinstance(thresholds, (int, float)):
        mask = confidence > float(thresholds)
    else:
        thresholds = _as_tensor(thresholds).to(q_w_det.dtype)
        if thresholds.numel() != c:
            raise ConfigurationError(
                f"per-class thresholds must have {c} entries, got {thresholds.numel()}"
            )
        mask = confidence >= thresholds[pseudo]

    if hard:
        ce = -torch.log(q_s[torch.arange(n), pseudo].clamp_min(LOG_FLOOR))
    else:
        ce = -(q_w_det * torch.log(q_s.clamp_min(LOG_FLOOR))).sum(dim=1)
    loss = (mask.to(ce.dtype) * ce).mean()
    mask_rate = float(mask.to(torch.float64).mean())
    return loss, mask_rate


def delta_consistency_loss(grouped: GroupedPredictions, stop_grad_labeled: bool = True) -> torch.Tensor:
    """Match the labeled weak-to-strong prediction shift against the mean
    unlabeled shift within each group.

    For group i, delta_L = p_i^w - p_i^s and delta_U = mean_m (q_{i,m}^w -
    q_{i,m}^s); the loss is the mean squared Euclidean distance between the
    two. With ``stop_grad_labeled`` the labeled shift is a fixed target and
    gradients reach the model only through the unlabeled branch.
    """
    if grouped.q_w.shape[1] == 0:
        raise ConfigurationError("delta consistency needs at least one unlabeled member per group")
    p_w, p_s = _as_tensor(grouped.p_w), _as_tensor(grouped.p_s)
    q_w, q_s = _as_tensor(grouped.q_w), _as_tensor(grouped.q_s)
    delta_l = p_w - p_s
    if stop_grad_labeled:
        delta_l = delta_l.detach()
    delta_u = (q_w - q_s).mean(dim=1)
    return ((delta_l - delta_u) ** 2).sum(dim=1).mean()


def total_loss(
    l_sup,
    l_unsup,
    l_dc,
    l_saf=0.0,
    *,
    lambda_u: float = 1.0,
    lambda_dc: float = 1.0,
    lambda_saf: float = 0.0,
    plus_mode: bool = False,
    mask_rate: float = 0.0,
) -> LossBreakdown:
    """Combine the loss terms into the training objective.

    total = l_sup + lambda_u * l_unsup + lambda_dc * l_dc, plus
    lambda_saf * l_saf in plus mode. Zero-weighted terms do not enter the
    sum (and so add nothing to the autograd graph).
    """
    for name, w in (("lambda_u", lambda_u), ("lambda_dc", lambda_dc), ("lambda_saf", lambda_saf)):
        if w < 0:
            raise ConfigurationError(f"{name} must be >= 0, got {w}")
    total = l_sup
    if lambda_u != 0.0:
        total = total + lambda_u * l_unsup
    if lambda_dc != 0.0:
        total = total + lambda_dc * l_dc
    if plus_mode and lambda_saf != 0.0:
        total = total + lambda_saf * l_saf
    return LossBreakdown(
        l_sup=l_sup,
        l_unsup=l_unsup,
        l_dc=l_dc,
        l_saf=l_saf if plus_mode else 0.0,
        total=total,
        mask_rate=mask_rate,
    )
