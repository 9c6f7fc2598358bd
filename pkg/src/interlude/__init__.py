"""Semi-supervised classification with labeled-unlabeled interaction:
interdigitated batches, circular-shift embedding fusion, delta consistency,
and self-adaptive thresholding."""

from .adaptive import AdaptiveState, class_thresholds, saf_loss, update_fairness_hist, update_sat
from .config import PRESETS, SUPERVISED_OVERRIDES, TrainConfig, resolve_config, validate_config
from .estimator import InterludeClassifier
from .fusion import FusionPlan, apply_fusion, build_circular_shift, validate_desiderata
from .layout import LayoutKind, OrderedBatch, SlotTag, count_lu_adjacencies, deinterleave, interdigitate
from .losses import (
    GroupedPredictions,
    LossBreakdown,
    delta_consistency_loss,
    instance_consistency_loss,
    supervised_loss,
    total_loss,
)
from .trainer import (
    EmaModel,
    TrainState,
    cosine_lr,
    ema_update,
    evaluate,
    load_checkpoint,
    run_training,
    save_checkpoint,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveState",
    "class_thresholds",
    "saf_loss",
    "update_fairness_hist",
    "update_sat",
    "PRESETS",
    "SUPERVISED_OVERRIDES",
    "TrainConfig",
    "resolve_config",
    "validate_config",
    "InterludeClassifier",
    "FusionPlan",
    "apply_fusion",
    "build_circular_shift",
    "validate_desiderata",
    "LayoutKind",
    "OrderedBatch",
    "SlotTag",
    "count_lu_adjacencies",
    "deinterleave",
    "interdigitate",
    "GroupedPredictions",
    "LossBreakdown",
    "delta_consistency_loss",
    "instance_consistency_loss",
    "supervised_loss",
    "total_loss",
    "EmaModel",
    "TrainState",
    "cosine_lr",
    "ema_update",
    "evaluate",
    "load_checkpoint",
    "run_training",
    "save_checkpoint",
    "train_step",
]
