"""Self-adaptive thresholding and fairness for the "plus" training mode.

Running statistics over the weak unlabeled predictions replace the fixed
confidence threshold: a global EMA of batch-mean top confidence (tau_t), a
per-class EMA of mean probabilities (p_tilde), and an EMA histogram of hard
weak predictions (h_tilde). All three start uniform at 1/C and advance once
per step with momentum lam:

    tau_t      = lam * tau_{t-1} + (1 - lam) * mean_j max(q_j^w)
    p_tilde(c) = lam * p_tilde_{t-1}(c) + (1 - lam) * mean_j q_j^w(c)
    h_tilde    = lam * h_tilde_{t-1} + (1 - lam) * hist(argmax q_j^w)

Per-class thresholds are tau_t scaled by p_tilde(c) / max_c p_tilde(c).

The fairness term rewards confident strong-view predictions whose
class-marginal profile matches the running estimate: with
a = SumNorm(p_tilde / h_tilde) and b = SumNorm(p_bar / h_bar) computed over
the confident subset, the loss is -H[a, b] = sum_c a_c * log b_c (negative,
more negative when the profiles agree and spread out).

State is kept in float64 so a recorded stream replays the recurrences
exactly; the fairness loss itself is computed in torch and differentiable
through the strong-view probabilities.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import torch

from .errors import ConfigurationError, DataError
from .losses import LOG_FLOOR

logger = logging.getLogger(__name__)

HIST_FLOOR = 1e-6


@dataclass(frozen=True)
class AdaptiveState:
    """Running SAT/SAF statistics; immutable, one instance per step."""

    num_classes: int
    momentum: float
    step: int
    tau_global: float
    p_tilde: np.ndarray
    h_tilde: np.ndarray

    @classmethod
    def initial(cls, num_classes: int, momentum: float = 0.999) -> "AdaptiveState":
        if num_classes < 2:
            raise ConfigurationError(f"need at least 2 classes, got {num_classes}")
        if not (0.0 <= momentum < 1.0):
            raise ConfigurationError(f"EMA momentum must lie in [0, 1), got {momentum}")
        uniform = np.full(num_classes, 1.0 / num_classes, dtype=np.float64)
        return cls(
            num_classes=num_classes,
            momentum=momentum,
            step=0,
            tau_global=1.0 / num_classes,
            p_tilde=uniform.copy(),
            h_tilde=uniform.copy(),
        )

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "momentum": self.momentum,
            "step": self.step,
            "tau_global": self.tau_global,
            "p_tilde": self.p_tilde.tolist(),
            "h_tilde": self.h_tilde.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptiveState":
        return cls(
            num_classes=int(d["num_classes"]),
            momentum=float(d["momentum"]),
            step=int(d["step"]),
            tau_global=float(d["tau_global"]),
            p_tilde=np.asarray(d["p_tilde"], dtype=np.float64),
            h_tilde=np.asarray(d["h_tilde"], dtype=np.float64),
        )


def _as_prob_array(q_w) -> np.ndarray:
    if isinstance(q_w, torch.Tensor):
        q_w = q_w.detach().cpu().numpy()
    q = np.asarray(q_w, dtype=np.float64)
    q = q.reshape(-1, q.shape[-1])
    if q.shape[0] == 0:
        raise DataError("adaptive update received an empty batch")
    return q


def update_sat(state: AdaptiveState, q_w) -> AdaptiveState:
    """Advance the global threshold and per-class probability EMAs one step."""
    q = _as_prob_array(q_w)
    if q.shape[1] != state.num_classes:
        raise ConfigurationError(f"expected {state.num_classes} classes, got {q.shape[1]}")
    lam = state.momentum
    tau = lam * state.tau_global + (1.0 - lam) * float(q.max(axis=1).mean())
    p_tilde = lam * state.p_tilde + (1.0 - lam) * q.mean(axis=0)
    return replace(state, step=state.step + 1, tau_global=tau, p_tilde=p_tilde)


def update_fairness_hist(state: AdaptiveState, q_w) -> AdaptiveState:
    """Advance the EMA histogram of hard weak predictions."""
    q = _as_prob_array(q_w)
    hist = np.bincount(q.argmax(axis=1), minlength=state.num_classes).astype(np.float64)
    hist /= q.shape[0]
    lam = state.momentum
    return replace(state, h_tilde=lam * state.h_tilde + (1.0 - lam) * hist)


def class_thresholds(state: AdaptiveState) -> np.ndarray:
    """Per-class thresholds: p_tilde(c) / max_c' p_tilde(c') * tau_global.

    The argmax class gets exactly tau_global.
    """
    top = state.p_tilde.max()
    if not top > 0:
        raise RuntimeError("p_tilde collapsed to zero; state is corrupt")
    return state.p_tilde / top * state.tau_global


def saf_loss(state: AdaptiveState, q_w, q_s) -> torch.Tensor:
    """Fairness loss over the confident subset of unlabeled samples.

    Samples are confident when their weak top probability reaches the
    per-class threshold of their weak argmax (inclusive). Over that subset,
    p_bar is the mean strong probability vector and h_bar the histogram of
    hard strong predictions; zero histogram entries are floored at 1e-6
    before the ratio. Returns 0.0 when nothing is confident.
    """
    q_w_t = q_w if isinstance(q_w, torch.Tensor) else torch.as_tensor(np.asarray(q_w))
    q_s_t = q_s if isinstance(q_s, torch.Tensor) else torch.as_tensor(np.asarray(q_s))
    c = state.num_classes
    q_w_t = q_w_t.reshape(-1, c).detach()
    q_s_t = q_s_t.reshape(-1, c)
    if q_w_t.shape[0] != q_s_t.shape[0]:
        raise ConfigurationError(
            f"weak/strong batches differ in size: {q_w_t.shape[0]} vs {q_s_t.shape[0]}"
        )

    thresholds = torch.as_tensor(class_thresholds(state), dtype=q_w_t.dtype)
    confidence, pseudo = q_w_t.max(dim=1)
    confident = confidence >= thresholds[pseudo]
    n_confident = int(confident.sum())
    if n_confident == 0:
        logger.warning("fairness loss skipped: no confident samples at step %d", state.step)
        return torch.zeros((), dtype=q_s_t.dtype)

    q_s_conf = q_s_t[confident]
    p_bar = q_s_conf.mean(dim=0)
    counts = torch.bincount(q_s_conf.detach().argmax(dim=1), minlength=c)
    h_bar = counts.to(q_s_conf.dtype) / n_confident

    p_tilde = torch.as_tensor(state.p_tilde, dtype=q_s_conf.dtype)
    h_tilde = torch.as_tensor(state.h_tilde, dtype=q_s_conf.dtype).clamp_min(HIST_FLOOR)
    a = p_tilde / h_tilde
    a = a / a.sum()
    b = p_bar / h_bar.clamp_min(HIST_FLOOR)
    b = b / b.sum()
    return (a * torch.log(b.clamp_min(LOG_FLOOR))).sum()
