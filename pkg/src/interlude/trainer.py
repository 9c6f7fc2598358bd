"""The training loop: batch assembly, fused forward pass, loss computation,
SGD with a cosine learning-rate schedule, EMA shadow weights, checkpointing,
and evaluation.

One step draws B labeled and mu*B unlabeled samples, augments each group of
1 + mu samples with one shared weak and one shared strong realization,
arranges all Q = 2*(1+mu)*B augmented samples in the configured layout,
embeds them in a single forward pass, fuses embeddings with the
circular-shift operator, classifies, and minimizes the combined objective.
Evaluation always runs the plain model (EMA shadow by default) without
augmentation or fusion.
"""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .adaptive import AdaptiveState, class_thresholds, saf_loss, update_fairness_hist, update_sat
from .config import TrainConfig
from .data.augment import ImageAugSpace, VectorAugSpace, get_aug
from .data.splits import DatasetSplit
from .errors import ConfigurationError, DataError, NumericError
from .fusion import apply_fusion, build_circular_shift
from .layout import OrderedBatch, deinterleave, interdigitate
from .losses import (
    LossBreakdown,
    instance_consistency_loss,
    delta_consistency_loss,
    supervised_loss,
    total_loss,
)
from .models import build_model

CHECKPOINT_MAGIC = "INTERLUDE-CKPT-v1"


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Learning rate at a step: lr0 * cos(7*pi*step / (16*total_steps)).

    Strictly decreasing and still positive at step == total_steps (the cosine
    argument never reaches pi/2).
    """
    if step < 0 or step > total_steps:
        raise ConfigurationError(f"step {step} outside [0, {total_steps}]")
    return lr0 * math.cos(7 * math.pi * step / (16 * total_steps))


class EmaModel:
    """Shadow copy of a model, advanced as shadow = decay*shadow + (1-decay)*live.

    Floating-point buffers (batch-norm running stats) are shadowed the same
    way when ``shadow_buffers`` is set, otherwise copied from the live model;
    integer buffers are always copied.
    """

    def __init__(self, model: torch.nn.Module, decay: float, shadow_buffers: bool = True):
        if not (0.0 <= decay <= 1.0):
            raise ConfigurationError(f"EMA decay must lie in [0, 1], got {decay}")
        self.decay = decay
        self.shadow_buffers = shadow_buffers
        self.shadow = copy.deepcopy(model)
        self.shadow.requires_grad_(False)
        self.shadow.eval()

    @torch.no_grad()
    def update(self, model: torch.nn.Module) -> "EmaModel":
        d = self.decay
        for s, p in zip(self.shadow.parameters(), model.parameters()):
            if s.shape != p.shape:
                raise ConfigurationError(
                    f"EMA shadow shape {tuple(s.shape)} != live shape {tuple(p.shape)}"
                )
            s.mul_(d).add_(p, alpha=1.0 - d)
        for s, b in zip(self.shadow.buffers(), model.buffers()):
            if s.dtype.is_floating_point and self.shadow_buffers:
                s.mul_(d).add_(b, alpha=1.0 - d)
            else:
                s.copy_(b)
        return self


def ema_update(ema: EmaModel, model: torch.nn.Module) -> EmaModel:
    return ema.update(model)


@dataclass
class TrainState:
    """Everything a step needs and everything a checkpoint must carry."""

    step: int
    model: torch.nn.Module
    ema: EmaModel
    optimizer: torch.optim.Optimizer
    adaptive: Optional[AdaptiveState]
    data_rng: np.random.Generator
    aug_rng: np.random.Generator
    num_classes: int
    input_shape: tuple
    aug_space: object
    history: list = field(default_factory=list)


def _to_model_array(x: np.ndarray) -> np.ndarray:
    """Convert one sample to the model's input layout: images become CHW
    float32 in [0, 1], vectors become float32."""
    x = np.asarray(x)
    if x.ndim == 3:
        return (x.transpose(2, 0, 1) / 255.0).astype(np.float32)
    if x.ndim == 2:
        return (x[None, :, :] / 255.0).astype(np.float32)
    return x.astype(np.float32)


def _model_input_shape(sample: np.ndarray) -> tuple:
    return tuple(_to_model_array(sample).shape)


def make_aug_space(cfg: TrainConfig, sample: np.ndarray):
    sample = np.asarray(sample)
    if sample.ndim >= 2:
        return ImageAugSpace()
    return VectorAugSpace(weak_sigma=cfg.weak_jitter)


def _build_optimizer(cfg: TrainConfig, model: torch.nn.Module) -> torch.optim.Optimizer:
    return torch.optim.SGD(
        model.parameters(),
        lr=cfg.lr,
        momentum=cfg.sgd_momentum,
        nesterov=cfg.nesterov and cfg.sgd_momentum > 0,
        weight_decay=0.0 if cfg.weight_decay_decoupled else cfg.weight_decay,
    )


def init_train_state(cfg: TrainConfig, split: DatasetSplit) -> TrainState:
    """Build model, optimizer, EMA, adaptive state, and the RNG streams."""
    if len(split.unlabeled_x) == 0:
        raise DataError("training needs a non-empty unlabeled pool")
    torch.manual_seed(cfg.seed)
    input_shape = _model_input_shape(split.labeled_x[0])
    model = build_model(
        cfg.model.arch, input_shape, split.num_classes,
        width=cfg.model.width, depth=cfg.model.depth,
    )
    seq = np.random.SeedSequence(cfg.seed)
    data_seq, aug_seq = seq.spawn(2)
    adaptive = (
        AdaptiveState.initial(split.num_classes, momentum=cfg.plus.ema_momentum)
        if cfg.plus.enabled
        else None
    )
    return TrainState(
        step=0,
        model=model,
        ema=EmaModel(model, cfg.ema_decay, shadow_buffers=cfg.ema_shadow_buffers),
        optimizer=_build_optimizer(cfg, model),
        adaptive=adaptive,
        data_rng=np.random.default_rng(data_seq),
        aug_rng=np.random.default_rng(aug_seq),
        num_classes=split.num_classes,
        input_shape=input_shape,
        aug_space=make_aug_space(cfg, split.labeled_x[0]),
        history=[],
    )


def draw_batches(state: TrainState, split: DatasetSplit, cfg: TrainConfig):
    """Sample (with replacement) B labeled and mu*B unlabeled raw samples."""
    li = state.data_rng.integers(0, len(split.labeled_x), size=cfg.batch_size)
    ui = state.data_rng.integers(0, len(split.unlabeled_x), size=cfg.mu * cfg.batch_size)
    return (split.labeled_x[li], split.labeled_y[li]), split.unlabeled_x[ui]


def assemble_batch(
    labeled_x: np.ndarray,
    labeled_y: np.ndarray,
    unlabeled_x: np.ndarray,
    cfg: TrainConfig,
    aug_rng: np.random.Generator,
    aug_space,
) -> OrderedBatch:
    """Augment groups under shared realizations and interdigitate the result.

    Group i is labeled sample i plus unlabeled samples i*mu..(i+1)*mu-1; each
    group draws one (weak, strong) realization pair applied to all members.
    """
    b = len(labeled_x)
    if len(unlabeled_x) != cfg.mu * b:
        raise DataError(
            f"expected {cfg.mu * b} unlabeled samples for batch_size {b}, got {len(unlabeled_x)}"
        )
    shape = np.asarray(labeled_x[0]).shape
    lab_w, lab_s, unl_w, unl_s = [], [], [], []
    for i in range(b):
        omega, sigma = aug_space.draw(aug_rng, shape)
        group = [unlabeled_x[i * cfg.mu + m] for m in range(cfg.mu)]
        x_w, x_s, g_w, g_s = get_aug(labeled_x[i], group, omega, sigma, aug_space, mu=cfg.mu)
        lab_w.append(_to_model_array(x_w))
        lab_s.append(_to_model_array(x_s))
        unl_w.extend(_to_model_array(u) for u in g_w)
        unl_s.extend(_to_model_array(u) for u in g_s)
    return interdigitate(lab_w, lab_s, unl_w, unl_s, cfg.layout, labels=np.asarray(labeled_y))


def step_on_batch(state: TrainState, batch: OrderedBatch, cfg: TrainConfig) -> LossBreakdown:
    """Run one optimization step on an already-assembled batch."""
    model = state.model
    model.train()
    x = batch.stack()

    z = model.embed(x)
    if cfg.fusion.enabled:
        plan = build_circular_shift(len(batch), cfg.fusion.alpha)
        z = apply_fusion(z, plan)
    logits = model.head(z)
    probs = torch.softmax(logits, dim=1)
    grouped = deinterleave(batch, probs)
    y = torch.as_tensor(batch.labels, dtype=torch.long)

    adaptive = state.adaptive
    plus = cfg.plus.enabled
    if plus and cfg.plus.update_before_loss:
        adaptive = update_sat(adaptive, grouped.q_w_flat())
        adaptive = update_fairness_hist(adaptive, grouped.q_w_flat())
    thresholds = class_thresholds(adaptive) if plus else cfg.loss.tau

    l_sup = supervised_loss(grouped.p_w, y)
    l_unsup, mask_rate = instance_consistency_loss(
        grouped.q_w_flat(), grouped.q_s_flat(), thresholds, hard=cfg.loss.hard_pseudo
    )
    l_dc = (
        delta_consistency_loss(grouped, stop_grad_labeled=cfg.loss.stop_grad_labeled_delta)
        if cfg.loss.lambda_dc != 0.0
        else 0.0
    )
    l_saf = (
        saf_loss(adaptive, grouped.q_w_flat(), grouped.q_s_flat())
        if plus and cfg.plus.lambda_saf != 0.0
        else 0.0
    )
    breakdown = total_loss(
        l_sup,
        l_unsup,
        l_dc,
        l_saf,
        lambda_u=cfg.loss.lambda_u,
        lambda_dc=cfg.loss.lambda_dc,
        lambda_saf=cfg.plus.lambda_saf,
        plus_mode=plus,
        mask_rate=mask_rate,
    )
    if plus and not cfg.plus.update_before_loss:
        adaptive = update_sat(adaptive, grouped.q_w_flat())
        adaptive = update_fairness_hist(adaptive, grouped.q_w_flat())

    total = breakdown.total
    if not torch.isfinite(total):
        raise NumericError(
            "non-finite loss at step "
            f"{state.step}: {breakdown.as_floats()}; batch layout={batch.layout.value} "
            f"B={batch.batch_size} mu={batch.mu}"
        )

    lr = cosine_lr(state.step, cfg.total_steps, cfg.lr)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.zero_grad()
    total.backward()
    if cfg.weight_decay_decoupled and cfg.weight_decay:
        with torch.no_grad():
            for p in state.model.parameters():
                p.mul_(1.0 - lr * cfg.weight_decay)
    state.optimizer.step()
    state.ema.update(model)

    state.adaptive = adaptive
    state.step += 1
    return breakdown.as_floats()


def train_step(state: TrainState, labeled_batch, unlabeled_batch, cfg: TrainConfig):
    """One full training step from raw samples; returns (state, LossBreakdown)."""
    labeled_x, labeled_y = labeled_batch
    batch = assemble_batch(labeled_x, labeled_y, unlabeled_batch, cfg, state.aug_rng, state.aug_space)
    breakdown = step_on_batch(state, batch, cfg)
    return state, breakdown


def evaluate(state: TrainState, test_x, test_y, use_ema: bool = True, batch_size: int = 512):
    """Error rate of the (EMA by default) model on a labeled set.

    No augmentation and no fusion: a plain forward pass.
    Returns (error_rate, per_class_errors).
    """
    test_x = np.asarray(test_x)
    test_y = np.asarray(test_y, dtype=np.int64)
    if len(test_x) == 0:
        raise DataError("evaluation set is empty")
    model = state.ema.shadow if use_ema else state.model
    was_training = model.training
    model.eval()
    preds = []
    with torch.no_grad():
        for lo in range(0, len(test_x), batch_size):
            chunk = test_x[lo : lo + batch_size]
            arr = np.stack([_to_model_array(s) for s in chunk])
            logits = model(torch.as_tensor(arr))
            preds.append(logits.argmax(dim=1).numpy())
    if was_training:
        model.train()
    pred = np.concatenate(preds)
    wrong = pred != test_y
    error_rate = float(wrong.mean())
    per_class = np.full(state.num_classes, np.nan)
    for c in range(state.num_classes):
        mask = test_y == c
        if mask.any():
            per_class[c] = float(wrong[mask].mean())
    return error_rate, per_class


@dataclass
class TrainResult:
    state: TrainState
    records: list
    best_step: Optional[int] = None
    best_error: Optional[float] = None
    best_model_state: Optional[dict] = None
    best_ema_state: Optional[dict] = None
    final_error: Optional[float] = None


def save_checkpoint(path, state: TrainState, cfg: TrainConfig) -> None:
    """Write a single-archive checkpoint sufficient for bit-identical resume."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    space = state.aug_space
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "step": state.step,
        "config": cfg.to_dict(),
        "model": state.model.state_dict(),
        "ema": state.ema.shadow.state_dict(),
        "optimizer": state.optimizer.state_dict(),
        "adaptive": state.adaptive.to_dict() if state.adaptive is not None else None,
        "data_rng": state.data_rng.bit_generator.state,
        "aug_rng": state.aug_rng.bit_generator.state,
        "torch_rng": torch.get_rng_state(),
        "num_classes": state.num_classes,
        "input_shape": tuple(state.input_shape),
        "space_kind": "vector" if isinstance(space, VectorAugSpace) else "image",
        "history": state.history,
    }
    torch.save(payload, path)


def load_checkpoint(path):
    """Rebuild (TrainState, TrainConfig) from a checkpoint archive."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    payload = torch.load(path, weights_only=False)
    if payload.get("magic") != CHECKPOINT_MAGIC:
        raise DataError(f"{path} is not a recognized checkpoint (missing {CHECKPOINT_MAGIC})")
    from .config import resolve_config

    cfg = resolve_config(payload["config"])
    model = build_model(
        cfg.model.arch,
        payload["input_shape"],
        payload["num_classes"],
        width=cfg.model.width,
        depth=cfg.model.depth,
    )
    model.load_state_dict(payload["model"])
    ema = EmaModel(model, cfg.ema_decay, shadow_buffers=cfg.ema_shadow_buffers)
    ema.shadow.load_state_dict(payload["ema"])
    optimizer = _build_optimizer(cfg, model)
    optimizer.load_state_dict(payload["optimizer"])
    data_rng = np.random.default_rng()
    data_rng.bit_generator.state = payload["data_rng"]
    aug_rng = np.random.default_rng()
    aug_rng.bit_generator.state = payload["aug_rng"]
    torch.set_rng_state(payload["torch_rng"])
    if payload["space_kind"] == "vector":
        space = VectorAugSpace(weak_sigma=cfg.weak_jitter)
    else:
        space = ImageAugSpace()
    state = TrainState(
        step=payload["step"],
        model=model,
        ema=ema,
        optimizer=optimizer,
        adaptive=AdaptiveState.from_dict(payload["adaptive"]) if payload["adaptive"] else None,
        data_rng=data_rng,
        aug_rng=aug_rng,
        num_classes=payload["num_classes"],
        input_shape=tuple(payload["input_shape"]),
        aug_space=space,
        history=payload["history"],
    )
    return state, cfg


def run_training(
    cfg: TrainConfig,
    split: DatasetSplit,
    test_x=None,
    test_y=None,
    val_x=None,
    val_y=None,
    run_dir=None,
    resume_from=None,
    log_every: int = 0,
) -> TrainResult:
    """Run the loop for cfg.total_steps steps with periodic evaluation and
    checkpointing. Returns final state plus the best-by-validation snapshot
    when a validation set was supplied."""
    if resume_from is not None:
        state, ckpt_cfg = load_checkpoint(resume_from)
        if ckpt_cfg.config_hash() != cfg.config_hash():
            raise ConfigurationError(
                "checkpoint config does not match the requested config; "
                "resume with the original settings"
            )
    else:
        state = init_train_state(cfg, split)

    run_dir = Path(run_dir) if run_dir is not None else None
    metrics_fh = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
        metrics_fh = (run_dir / "metrics.jsonl").open("a")

    best_step = best_error = best_model_state = best_ema_state = None
    t0 = time.monotonic()
    try:
        for k in range(state.step, cfg.total_steps):
            labeled, unlabeled = draw_batches(state, split, cfg)
            lr = cosine_lr(k, cfg.total_steps, cfg.lr)
            state, breakdown = train_step(state, labeled, unlabeled, cfg)

            eval_error = None
            eval_x, eval_y = (val_x, val_y) if val_x is not None else (test_x, test_y)
            due = cfg.eval_every > 0 and state.step % cfg.eval_every == 0
            if eval_x is not None and (due or state.step == cfg.total_steps):
                eval_error, _ = evaluate(state, eval_x, eval_y)
                if val_x is not None and (best_error is None or eval_error < best_error):
                    best_error = eval_error
                    best_step = state.step
                    best_model_state = copy.deepcopy(state.model.state_dict())
                    best_ema_state = copy.deepcopy(state.ema.shadow.state_dict())

            record = {
                "step": state.step,
                "lr": lr,
                "l_sup": breakdown.l_sup,
                "l_unsup": breakdown.l_unsup,
                "l_dc": breakdown.l_dc,
                "l_saf": breakdown.l_saf,
                "mask_rate": breakdown.mask_rate,
                "tau_global": state.adaptive.tau_global if state.adaptive else None,
                "eval_error": eval_error,
            }
            state.history.append(record)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record) + "\n")
                metrics_fh.flush()
            if log_every and state.step % log_every == 0:
                elapsed = time.monotonic() - t0
                print(
                    f"step {state.step}/{cfg.total_steps} "
                    f"total={breakdown.total:.4f} mask={breakdown.mask_rate:.2f} "
                    f"({elapsed:.0f}s)"
                )

            if run_dir is not None and cfg.checkpoint_every > 0 and (
                state.step % cfg.checkpoint_every == 0 or state.step == cfg.total_steps
            ):
                ckpt = run_dir / f"checkpoint-{state.step:08d}.pt"
                save_checkpoint(ckpt, state, cfg)
                save_checkpoint(run_dir / "checkpoint-latest.pt", state, cfg)
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    final_error = None
    if test_x is not None:
        final_error, _ = evaluate(state, test_x, test_y)

    return TrainResult(
        state=state,
        records=state.history,
        best_step=best_step,
        best_error=best_error,
        best_model_state=best_model_state,
        best_ema_state=best_ema_state,
        final_error=final_error,
    )
