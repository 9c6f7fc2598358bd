"""Classifier architectures split into an embedding trunk and a linear head.

Every model exposes ``embed`` (input to penultimate representation) and
``head`` (penultimate to logits) so the training loop can fuse embeddings
between the two; ``forward`` is their composition.
"""

from __future__ import annotations

import re

import torch
from torch import nn
import torch.nn.functional as F

from .errors import ConfigurationError


class EmbeddingClassifier(nn.Module):
    """Base class wiring forward = head(embed(x))."""

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def head(self, z: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.embed(x))


class MLP(EmbeddingClassifier):
    """Plain ReLU perceptron for vector inputs; no normalization layers, so
    per-sample outputs are independent of batch composition."""

    def __init__(self, in_dim: int, num_classes: int, width: int = 64, depth: int = 2):
        super().__init__()
        if depth < 1:
            raise ConfigurationError(f"MLP depth must be >= 1, got {depth}")
        dims = [in_dim] + [width] * depth
        self.trunk = nn.Sequential()
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            self.trunk.append(nn.Linear(a, b))
            self.trunk.append(nn.ReLU(inplace=False))
        self.classifier = nn.Linear(width, num_classes)
        self.embedding_dim = width

    def embed(self, x):
        return self.trunk(x.flatten(1))

    def head(self, z):
        return self.classifier(z)


class SmallCNN(EmbeddingClassifier):
    """Two conv blocks with batch norm, for small-image smoke runs."""

    def __init__(self, in_channels: int, num_classes: int, width: int = 32):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(in_channels, width, 3, padding=1),
            nn.BatchNorm2d(width),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(width, 2 * width, 3, padding=1),
            nn.BatchNorm2d(2 * width),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )
        self.classifier = nn.Linear(2 * width, num_classes)
        self.embedding_dim = 2 * width

    def embed(self, x):
        return self.features(x).flatten(1)

    def head(self, z):
        return self.classifier(z)


class _WideBasic(nn.Module):
    def __init__(self, in_planes, planes, stride):
        super().__init__()
        self.bn1 = nn.BatchNorm2d(in_planes)
        self.conv1 = nn.Conv2d(in_planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, stride=1, padding=1, bias=False)
        self.shortcut = None
        if stride != 1 or in_planes != planes:
            self.shortcut = nn.Conv2d(in_planes, planes, 1, stride=stride, bias=False)

    def forward(self, x):
        out = F.relu(self.bn1(x))
        skip = self.shortcut(out) if self.shortcut is not None else x
        out = self.conv1(out)
        out = self.conv2(F.relu(self.bn2(out)))
        return out + skip


class WideResNet(EmbeddingClassifier):
    """WRN-d-k with pre-activation basic blocks; embedding is the pooled
    final feature map (dimension 64 * widen_factor)."""

    def __init__(self, depth: int, widen_factor: int, num_classes: int, in_channels: int = 3):
        super().__init__()
        if (depth - 4) % 6 != 0:
            raise ConfigurationError(f"WRN depth must be 6n+4, got {depth}")
        n = (depth - 4) // 6
        widths = [16, 16 * widen_factor, 32 * widen_factor, 64 * widen_factor]
        self.conv1 = nn.Conv2d(in_channels, widths[0], 3, padding=1, bias=False)
        layers = []
        in_planes = widths[0]
        for group, (planes, stride) in enumerate(zip(widths[1:], (1, 2, 2))):
            for block in range(n):
                layers.append(_WideBasic(in_planes, planes, stride if block == 0 else 1))
                in_planes = planes
        self.blocks = nn.Sequential(*layers)
        self.bn = nn.BatchNorm2d(widths[3])
        self.classifier = nn.Linear(widths[3], num_classes)
        self.embedding_dim = widths[3]

    def embed(self, x):
        out = self.blocks(self.conv1(x))
        out = F.relu(self.bn(out))
        return F.adaptive_avg_pool2d(out, 1).flatten(1)

    def head(self, z):
        return self.classifier(z)


def build_model(arch: str, input_shape, num_classes: int, width: int = 64, depth: int = 2):
    """Instantiate a model by name for a given input shape.

    ``input_shape`` is the per-sample shape: (D,) for vectors, (C, H, W) for
    images. Supported names: ``mlp``, ``small-cnn``, and ``wrn-<depth>-<k>``.
    """
    arch = arch.lower().replace("_", "-")
    if arch == "mlp":
        in_dim = 1
        for d in input_shape:
            in_dim *= d
        return MLP(in_dim, num_classes, width=width, depth=depth)
    if arch == "small-cnn":
        if len(input_shape) != 3:
            raise ConfigurationError(f"small-cnn needs (C, H, W) inputs, got {input_shape}")
        return SmallCNN(input_shape[0], num_classes, width=width)
    wrn = re.fullmatch(r"wrn-(\d+)-(\d+)", arch)
    if wrn:
        if len(input_shape) != 3:
            raise ConfigurationError(f"wrn needs (C, H, W) inputs, got {input_shape}")
        return WideResNet(int(wrn.group(1)), int(wrn.group(2)), num_classes, input_shape[0])
    raise ConfigurationError(
        f"unknown architecture {arch!r}; expected mlp, small-cnn, or wrn-<depth>-<k>"
    )
