"""Reified augmentations: every random choice is resolved into a parameter
record at draw time, so one realization can be replayed bit-identically on
each of the 1 + mu images in a group.

Images (uint8 HWC arrays) get a weak realization (horizontal flip with
probability 0.5 plus a random crop after 4-pixel reflection padding) and a
strong realization (the same geometric base, two operations sampled from a
RandAugment-style pool at magnitude 10 with per-draw levels and signs, then
a cutout patch). 2-D feature vectors get additive Gaussian offsets, with the
strong offset drawn at triple the weak scale; the offset itself is the
resolved parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from PIL import Image, ImageEnhance, ImageOps

from ..errors import BatchAssemblyError, ConfigurationError

WEAK = "weak"
STRONG = "strong"

_SEED_RANGE = 2**63


@dataclass(frozen=True)
class AugRealization:
    """One fully-resolved transform: kind, parameter record, and the seed it
    was resolved from."""

    kind: str
    params: dict
    seed: int


# ---------------------------------------------------------------------------
# strong-op pool (PIL-based, all parameters resolved before application)
# ---------------------------------------------------------------------------

def _enhance(factory):
    def op(img, v):
        return factory(img).enhance(v)

    return op


def _shear(axis):
    def op(img, v):
        coeffs = (1, v, 0, 0, 1, 0) if axis == 0 else (1, 0, 0, v, 1, 0)
        return img.transform(img.size, Image.AFFINE, coeffs, fillcolor=(127,) * len(img.getbands()))

    return op


def _translate(axis):
    def op(img, v):
        px = int(v * img.size[axis])
        coeffs = (1, 0, px, 0, 1, 0) if axis == 0 else (1, 0, 0, 0, 1, px)
        return img.transform(img.size, Image.AFFINE, coeffs, fillcolor=(127,) * len(img.getbands()))

    return op


STRONG_OPS = {
    "identity": lambda img, v: img,
    "autocontrast": lambda img, v: ImageOps.autocontrast(img),
    "equalize": lambda img, v: ImageOps.equalize(img),
    "rotate": lambda img, v: img.rotate(v, fillcolor=(127,) * 3),
    "solarize": lambda img, v: ImageOps.solarize(img, int(v)),
    "posterize": lambda img, v: ImageOps.posterize(img, int(v)),
    "contrast": _enhance(ImageEnhance.Contrast),
    "brightness": _enhance(ImageEnhance.Brightness),
    "color": _enhance(ImageEnhance.Color),
    "sharpness": _enhance(ImageEnhance.Sharpness),
    "shear_x": _shear(0),
    "shear_y": _shear(1),
    "translate_x": _translate(0),
    "translate_y": _translate(1),
}

# value resolver per op: maps a level in [1, magnitude] plus a sign draw to
# the op's own parameter scale
def _op_value(name: str, level: int, magnitude: int, sign: int) -> float:
    frac = level / magnitude
    if name == "rotate":
        return sign * 30.0 * frac
    if name == "solarize":
        return 256.0 - 256.0 * frac
    if name == "posterize":
        return 8 - int(4 * frac)
    if name in ("contrast", "brightness", "color", "sharpness"):
        return 1.0 + sign * 0.9 * frac
    if name in ("shear_x", "shear_y", "translate_x", "translate_y"):
        return sign * 0.3 * frac
    return 0.0


_SIGNED_OPS = frozenset(
    {"rotate", "contrast", "brightness", "color", "sharpness",
     "shear_x", "shear_y", "translate_x", "translate_y"}
)


@dataclass(frozen=True)
class ImageAugSpace:
    """Weak/strong augmentation families for uint8 HWC images."""

    crop_padding: int = 4
    num_strong_ops: int = 2
    strong_magnitude: int = 10
    cutout_ratio: float = 0.5

    def resolve(self, kind: str, seed: int, shape: Sequence[int]) -> dict:
        """Deterministically expand a seed into a parameter record."""
        h, w = shape[0], shape[1]
        rng = np.random.default_rng(seed)
        pad = self.crop_padding
        params = {
            "flip": bool(rng.random() < 0.5),
            "dy": int(rng.integers(0, 2 * pad + 1)),
            "dx": int(rng.integers(0, 2 * pad + 1)),
            "padding": pad,
        }
        if kind == STRONG:
            names = list(STRONG_OPS)
            ops = []
            for _ in range(self.num_strong_ops):
                name = names[int(rng.integers(0, len(names)))]
                level = int(rng.integers(1, self.strong_magnitude + 1))
                sign = -1 if (name in _SIGNED_OPS and rng.random() < 0.5) else 1
                if rng.random() < 0.5:  # each sampled op fires half the time
                    ops.append((name, _op_value(name, level, self.strong_magnitude, sign)))
            size = int(self.cutout_ratio * min(h, w))
            params["ops"] = ops
            params["cutout"] = (int(rng.integers(0, h)), int(rng.integers(0, w)), size)
        return params

    def draw(self, rng: np.random.Generator, shape: Sequence[int]):
        weak_seed = int(rng.integers(0, _SEED_RANGE))
        strong_seed = int(rng.integers(0, _SEED_RANGE))
        return (
            AugRealization(WEAK, self.resolve(WEAK, weak_seed, shape), weak_seed),
            AugRealization(STRONG, self.resolve(STRONG, strong_seed, shape), strong_seed),
        )

    @staticmethod
    def identity_realization(kind: str) -> AugRealization:
        params = {"flip": False, "dy": 0, "dx": 0, "padding": 0}
        if kind == STRONG:
            params.update(ops=[], cutout=None)
        return AugRealization(kind, params, seed=-1)

    def apply(self, x: np.ndarray, realization: AugRealization) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[:, :, None]
        out = x
        if realization.params["flip"]:
            out = out[:, ::-1]
        pad = realization.params["padding"]
        if pad:
            out = np.pad(out, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")
        dy, dx = realization.params["dy"], realization.params["dx"]
        h, w = x.shape[0], x.shape[1]
        out = out[dy : dy + h, dx : dx + w]
        if realization.kind == STRONG:
            out = self._apply_strong_ops(out, realization.params)
        return np.ascontiguousarray(out)

    def _apply_strong_ops(self, x: np.ndarray, params: dict) -> np.ndarray:
        ops = params.get("ops") or []
        if ops:
            squeeze = x.shape[2] == 1
            img = Image.fromarray(x[:, :, 0] if squeeze else x)
            if img.mode != "RGB":
                img = img.convert("RGB")
            for name, value in ops:
                img = STRONG_OPS[name](img, value)
            out = np.asarray(img, dtype=x.dtype)
            x = out[:, :, :1] if squeeze else out
        cut = params.get("cutout")
        if cut:
            cy, cx, size = cut
            if size > 0:
                x = x.copy()
                half = size // 2
                y0, y1 = max(cy - half, 0), min(cy + half, x.shape[0])
                x0, x1 = max(cx - half, 0), min(cx + half, x.shape[1])
                x[y0:y1, x0:x1] = 127
        return x


@dataclass(frozen=True)
class VectorAugSpace:
    """Additive-jitter augmentation for feature vectors: the resolved
    parameter is the offset itself, shared across a group."""

    weak_sigma: float = 0.1
    strong_scale: float = 3.0

    def resolve(self, kind: str, seed: int, shape: Sequence[int]) -> dict:
        dim = int(np.prod(shape))
        sigma = self.weak_sigma * (self.strong_scale if kind == STRONG else 1.0)
        offset = sigma * np.random.default_rng(seed).standard_normal(dim)
        return {"offset": offset.tolist()}

    def draw(self, rng: np.random.Generator, shape: Sequence[int]):
        weak_seed = int(rng.integers(0, _SEED_RANGE))
        strong_seed = int(rng.integers(0, _SEED_RANGE))
        return (
            AugRealization(WEAK, self.resolve(WEAK, weak_seed, shape), weak_seed),
            AugRealization(STRONG, self.resolve(STRONG, strong_seed, shape), strong_seed),
        )

    @staticmethod
    def identity_realization(kind: str, dim: int) -> AugRealization:
        return AugRealization(kind, {"offset": [0.0] * dim}, seed=-1)

    def apply(self, x: np.ndarray, realization: AugRealization) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x + np.asarray(realization.params["offset"], dtype=np.float64)


def space_for(sample: np.ndarray, **kwargs):
    """Pick the augmentation family matching a sample's shape: images are
    2-D/3-D uint8 arrays, everything 1-D is a feature vector."""
    sample = np.asarray(sample)
    if sample.ndim >= 2:
        return ImageAugSpace(**kwargs)
    return VectorAugSpace(**kwargs)


def draw_aug_params(rng: np.random.Generator, space, shape: Sequence[int]):
    """Draw one fully-resolved (weak, strong) realization pair."""
    return space.draw(rng, shape)


def apply_realization(x: np.ndarray, realization: AugRealization, space) -> np.ndarray:
    return space.apply(x, realization)


def get_aug(
    x: np.ndarray,
    unlabeled_group: Sequence[np.ndarray],
    omega: AugRealization,
    sigma: AugRealization,
    space,
    mu: Optional[int] = None,
):
    """Apply one weak and one strong realization across a labeled sample and
    its mu unlabeled group members.

    All 1 + mu weak outputs share the identical weak parameters; likewise for
    strong. Returns (x_weak, x_strong, group_weak, group_strong).
    """
    if mu is not None and len(unlabeled_group) != mu:
        raise BatchAssemblyError(
            f"unlabeled group has {len(unlabeled_group)} members, expected mu={mu}"
        )
    if omega.kind != WEAK or sigma.kind != STRONG:
        raise ConfigurationError(
            f"expected (weak, strong) realizations, got ({omega.kind}, {sigma.kind})"
        )
    x_w = space.apply(x, omega)
    x_s = space.apply(x, sigma)
    group_w = [space.apply(u, omega) for u in unlabeled_group]
    group_s = [space.apply(u, sigma) for u in unlabeled_group]
    return x_w, x_s, group_w, group_s
