"""Scikit-learn estimator wrapping the semi-supervised training loop.

Follows the ``sklearn.semi_supervised`` convention: rows of ``y`` equal to
-1 are unlabeled. The estimator trains an MLP on feature vectors with the
full interdigitated-batch pipeline (shared-jitter augmentation, circular
embedding fusion, consistency and delta-consistency losses) and predicts
with the EMA shadow model.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .config import resolve_config
from .data.splits import DatasetSplit
from .errors import ConfigurationError
from .trainer import _to_model_array, run_training

UNLABELED_MARKER = -1


class InterludeClassifier(ClassifierMixin, BaseEstimator):
    """Semi-supervised neural classifier with labeled-unlabeled interaction.

    Parameters mirror the training config: ``alpha`` is the embedding-fusion
    strength, ``lambda_dc`` weights the delta-consistency term, ``tau`` is
    the fixed confidence threshold (replaced by self-adaptive thresholds
    when ``plus_mode`` is on), and ``layout`` picks the batch ordering.
    ``weak_jitter`` sets the weak augmentation scale for feature vectors;
    the strong scale is three times larger.

    When ``fit`` receives no unlabeled rows, the labeled inputs also serve
    as the unlabeled pool so the objective stays well-defined.
    """

    def __init__(
        self,
        hidden_width: int = 64,
        hidden_depth: int = 2,
        steps: int = 1500,
        batch_size: int = 4,
        mu: int = 7,
        lr: float = 0.03,
        sgd_momentum: float = 0.9,
        weight_decay: float = 5e-4,
        ema_decay: float = 0.99,
        alpha: float = 0.1,
        fusion_enabled: bool = True,
        lambda_u: float = 1.0,
        lambda_dc: float = 1.0,
        tau: float = 0.95,
        plus_mode: bool = False,
        lambda_saf: float = 0.05,
        layout: str = "high_i3",
        weak_jitter: float = 0.1,
        random_state: int = 0,
    ):
        self.hidden_width = hidden_width
        self.hidden_depth = hidden_depth
        self.steps = steps
        self.batch_size = batch_size
        self.mu = mu
        self.lr = lr
        self.sgd_momentum = sgd_momentum
        self.weight_decay = weight_decay
        self.ema_decay = ema_decay
        self.alpha = alpha
        self.fusion_enabled = fusion_enabled
        self.lambda_u = lambda_u
        self.lambda_dc = lambda_dc
        self.tau = tau
        self.plus_mode = plus_mode
        self.lambda_saf = lambda_saf
        self.layout = layout
        self.weak_jitter = weak_jitter
        self.random_state = random_state

    def _config(self):
        return resolve_config(
            {
                "batch_size": self.batch_size,
                "mu": self.mu,
                "total_steps": self.steps,
                "lr": self.lr,
                "sgd_momentum": self.sgd_momentum,
                "weight_decay": self.weight_decay,
                "ema_decay": self.ema_decay,
                "layout": self.layout,
                "seed": self.random_state,
                "eval_every": 0,
                "checkpoint_every": 0,
                "weak_jitter": self.weak_jitter,
                "model": {"arch": "mlp", "width": self.hidden_width, "depth": self.hidden_depth},
                "fusion": {"alpha": self.alpha, "enabled": self.fusion_enabled},
                "loss": {
                    "lambda_u": self.lambda_u,
                    "lambda_dc": self.lambda_dc,
                    "tau": self.tau,
                },
                "plus": {"enabled": self.plus_mode, "lambda_saf": self.lambda_saf},
            }
        )

    def fit(self, X, y):
        """Train on a mix of labeled rows and unlabeled rows (y == -1)."""
        X, y = check_X_y(X, y)
        y = np.asarray(y)
        unlabeled = y == UNLABELED_MARKER
        labeled_y = y[~unlabeled]
        if labeled_y.size == 0:
            raise ConfigurationError("fit needs at least one labeled row (y != -1)")
        self.classes_ = np.unique(labeled_y)
        encoded = np.searchsorted(self.classes_, labeled_y)
        if len(self.classes_) < 2:
            raise ConfigurationError("fit needs at least two labeled classes")

        labeled_x = np.asarray(X[~unlabeled], dtype=np.float64)
        unlabeled_x = np.asarray(X[unlabeled], dtype=np.float64)
        if len(unlabeled_x) == 0:
            unlabeled_x = labeled_x.copy()
        split = DatasetSplit(
            labeled_x=labeled_x,
            labeled_y=encoded,
            unlabeled_x=unlabeled_x,
            num_classes=len(self.classes_),
        )
        result = run_training(self._config(), split)
        self._state = result.state
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "_state")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ConfigurationError(
                f"X has {X.shape[1]} features; expected {self.n_features_in_}"
            )
        model = self._state.ema.shadow
        model.eval()
        with torch.no_grad():
            arr = np.stack([_to_model_array(row) for row in np.asarray(X, dtype=np.float64)])
            logits = model(torch.as_tensor(arr))
            return torch.softmax(logits, dim=1).numpy()

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
