"""Training configuration: nested dataclasses, named presets, YAML loading,
and dotted-path overrides (``loss.lambda_dc=0.5``).

Unknown keys are rejected outright; values are range-checked after
resolution. ``loss.lambda_saf`` and ``plus.lambda_saf`` name the same knob
and may not disagree.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigurationError
from .layout import LayoutKind


@dataclass
class FusionConfig:
    alpha: float = 0.1
    enabled: bool = True


@dataclass
class LossConfig:
    lambda_u: float = 1.0
    lambda_dc: float = 1.0
    lambda_saf: float = 0.05
    tau: float = 0.95
    hard_pseudo: bool = True
    stop_grad_labeled_delta: bool = True


@dataclass
class PlusConfig:
    enabled: bool = False
    lambda_saf: float = 0.05
    ema_momentum: float = 0.999
    update_before_loss: bool = True


@dataclass
class ModelConfig:
    arch: str = "mlp"
    width: int = 64
    depth: int = 2


@dataclass
class TrainConfig:
    """All hyperparameters of one training run."""

    batch_size: int = 64
    mu: int = 7
    total_steps: int = 1024
    lr: float = 0.03
    sgd_momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 5e-4
    weight_decay_decoupled: bool = False
    ema_decay: float = 0.999
    ema_shadow_buffers: bool = True
    layout: str = "high_i3"
    seed: int = 0
    eval_every: int = 256
    checkpoint_every: int = 1024
    weak_jitter: float = 0.1
    model: ModelConfig = field(default_factory=ModelConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    plus: PlusConfig = field(default_factory=PlusConfig)

    def validate(self) -> "TrainConfig":
        def check(cond, msg):
            if not cond:
                raise ConfigurationError(msg)

        check(self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}")
        check(self.mu >= 1, f"mu must be >= 1, got {self.mu}")
        check(self.total_steps > 0, f"total_steps must be > 0, got {self.total_steps}")
        check(self.lr > 0, f"lr must be > 0, got {self.lr}")
        check(0 <= self.sgd_momentum < 1, f"sgd_momentum must lie in [0, 1), got {self.sgd_momentum}")
        check(self.weight_decay >= 0, f"weight_decay must be >= 0, got {self.weight_decay}")
        check(0 < self.ema_decay <= 1, f"ema_decay must lie in (0, 1], got {self.ema_decay}")
        check(self.weak_jitter >= 0, f"weak_jitter must be >= 0, got {self.weak_jitter}")
        LayoutKind.parse(self.layout)
        if self.fusion.enabled:
            check(
                0 < self.fusion.alpha < 0.5,
                f"fusion.alpha must lie in (0, 0.5), got {self.fusion.alpha}",
            )
        check(0 < self.loss.tau <= 1, f"loss.tau must lie in (0, 1], got {self.loss.tau}")
        for name in ("lambda_u", "lambda_dc", "lambda_saf"):
            value = getattr(self.loss, name)
            check(value >= 0, f"loss.{name} must be >= 0, got {value}")
        check(
            0 <= self.plus.ema_momentum < 1,
            f"plus.ema_momentum must lie in [0, 1), got {self.plus.ema_momentum}",
        )
        check(self.plus.lambda_saf >= 0, f"plus.lambda_saf must be >= 0, got {self.plus.lambda_saf}")
        return self

    @property
    def slots_per_batch(self) -> int:
        return 2 * (1 + self.mu) * self.batch_size

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


_SECTIONS = {
    "model": ModelConfig,
    "fusion": FusionConfig,
    "loss": LossConfig,
    "plus": PlusConfig,
}


# Hyperparameter presets per backbone family; desk-scale presets shorten the
# schedule and shrink the model so runs finish on a laptop CPU.
PRESETS: dict = {
    "cnn-cifar10": {
        "batch_size": 64,
        "mu": 7,
        "total_steps": 2**20,
        "lr": 0.03,
        "sgd_momentum": 0.9,
        "weight_decay": 5e-4,
        "ema_decay": 0.999,
        "model.arch": "wrn-28-2",
        "fusion.alpha": 0.1,
        "loss.lambda_dc": 1.0,
        "loss.tau": 0.95,
    },
    "cnn-cifar100": {
        "batch_size": 64,
        "mu": 7,
        "total_steps": 2**20,
        "lr": 0.03,
        "sgd_momentum": 0.9,
        "weight_decay": 1e-3,
        "ema_decay": 0.999,
        "model.arch": "wrn-28-8",
        "fusion.alpha": 0.1,
        "loss.lambda_dc": 1.0,
        "loss.tau": 0.95,
    },
    # ViT-backbone hyperparameters; the transformer itself is out of scope,
    # so this preset only pins the run-level knobs.
    "vit": {
        "batch_size": 8,
        "mu": 7,
        "total_steps": 204800,
        "lr": 5e-4,
        "weight_decay": 5e-4,
        "ema_decay": 0.999,
        "fusion.alpha": 0.1,
        "loss.lambda_dc": 0.1,
        "loss.tau": 0.95,
    },
    "mlp-synthetic": {
        "batch_size": 4,
        "mu": 7,
        "total_steps": 1500,
        "lr": 0.03,
        "weight_decay": 5e-4,
        "ema_decay": 0.99,
        "eval_every": 250,
        "weak_jitter": 0.1,
        "model.arch": "mlp",
        "model.width": 64,
        "model.depth": 2,
        "fusion.alpha": 0.1,
        "loss.lambda_dc": 1.0,
        "loss.tau": 0.95,
    },
}

# Turns every unlabeled-data term off; apply on top of any preset to get the
# label-only baseline.
SUPERVISED_OVERRIDES = {
    "loss.lambda_u": 0.0,
    "loss.lambda_dc": 0.0,
    "fusion.enabled": False,
    "plus.enabled": False,
}

PRESETS["mlp-synthetic-supervised"] = dict(PRESETS["mlp-synthetic"], **SUPERVISED_OVERRIDES)


def _coerce(value, target_type, key: str):
    if target_type is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            lowered = value.strip().lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
        raise ConfigurationError(f"{key}: expected a boolean, got {value!r}")
    if target_type is int:
        if isinstance(value, bool):
            raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, (str, float)):
            as_float = float(value)
            if as_float != int(as_float):
                raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
            return int(as_float)
        raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
    if target_type is float:
        if isinstance(value, bool):
            raise ConfigurationError(f"{key}: expected a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{key}: expected a number, got {value!r}")
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"{key}: expected a string, got {value!r}")
        return value
    return value


def _set_dotted(cfg: TrainConfig, key: str, value) -> None:
    parts = key.split(".")
    if len(parts) == 1:
        target, attr = cfg, parts[0]
        owner = TrainConfig
    elif len(parts) == 2 and parts[0] in _SECTIONS:
        target, attr = getattr(cfg, parts[0]), parts[1]
        owner = _SECTIONS[parts[0]]
    else:
        raise ConfigurationError(f"unknown config key: {key}")
    field_types = {f.name: f.type for f in dataclasses.fields(owner)}
    if attr not in field_types or attr in _SECTIONS:
        raise ConfigurationError(f"unknown config key: {key}")
    type_map = {"int": int, "float": float, "bool": bool, "str": str}
    target_type = type_map.get(field_types[attr], None)
    setattr(target, attr, _coerce(value, target_type, key))


def _flatten(doc: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in doc.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, prefix=f"{full}."))
        else:
            flat[full] = value
    return flat


def resolve_config(
    document: Optional[dict] = None,
    preset: Optional[str] = None,
    overrides: Optional[dict] = None,
) -> TrainConfig:
    """Merge defaults <- preset <- document <- overrides into a validated
    TrainConfig.

    The document may itself carry a ``preset`` key (an explicit ``preset``
    argument wins). Keys are dotted paths or nested sections.
    """
    document = dict(document or {})
    doc_preset = document.pop("preset", None)
    preset = preset or doc_preset

    cfg = TrainConfig()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(
                f"unknown preset {preset!r}; available: {', '.join(sorted(PRESETS))}"
            )
        for key, value in PRESETS[preset].items():
            _set_dotted(cfg, key, value)

    merged = _flatten(document)
    merged.update(_flatten(overrides or {}))
    saf_keys = {k: v for k, v in merged.items() if k in ("loss.lambda_saf", "plus.lambda_saf")}
    if len(saf_keys) == 2:
        values = set(float(v) for v in saf_keys.values())
        if len(values) > 1:
            raise ConfigurationError(
                "loss.lambda_saf and plus.lambda_saf name the same weight but disagree: "
                f"{saf_keys}"
            )
    for key, value in merged.items():
        _set_dotted(cfg, key, value)
        if key in ("loss.lambda_saf", "plus.lambda_saf"):
            other = "plus.lambda_saf" if key.startswith("loss") else "loss.lambda_saf"
            _set_dotted(cfg, other, value)

    return cfg.validate()


def load_config_document(path) -> dict:
    """Parse a YAML config file into a dict (empty file -> empty dict)."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"could not parse {path}: {exc}")
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path} must hold a mapping at top level")
    return doc


def validate_config(path, preset: Optional[str] = None, overrides: Optional[dict] = None) -> TrainConfig:
    """Load, merge, and range-check a config file; returns the resolved
    TrainConfig. The ``dataset`` section is not part of the train config and
    is handled by the callers that need it."""
    doc = load_config_document(path)
    doc.pop("dataset", None)
    return resolve_config(doc, preset=preset, overrides=overrides)


def parse_override_tokens(tokens) -> dict:
    """Parse CLI tokens of the form ``--loss.lambda_dc=0.5`` into a dict."""
    overrides = {}
    for token in tokens:
        if not token.startswith("--") or "=" not in token:
            raise ConfigurationError(
                f"override {token!r} must look like --section.key=value"
            )
        key, _, value = token[2:].partition("=")
        if not key:
            raise ConfigurationError(f"override {token!r} has an empty key")
        overrides[key] = value
    return overrides
