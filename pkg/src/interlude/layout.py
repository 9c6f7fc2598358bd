"""Batch layouts that interleave labeled and unlabeled samples.

A training batch holds B labeled samples and mu*B unlabeled samples, each
augmented twice (weak and strong), for Q = 2*(1+mu)*B slots total. The slot
ordering decides which embeddings end up adjacent, and therefore which pairs
the circular-shift fusion mixes. Four orderings are supported; ``high_i3``
(labeled-weak, its mu unlabeled-weak, labeled-strong, its mu unlabeled-strong,
repeated per group) is the default and maximizes labeled-unlabeled adjacency.

Unlabeled samples are partitioned contiguously into B groups of mu: flat
index j belongs to group j // mu as member (j % mu) + 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .errors import BatchAssemblyError, ConfigurationError

LABELED = "labeled"
UNLABELED = "unlabeled"
WEAK = "weak"
STRONG = "strong"


class LayoutKind(str, enum.Enum):
    LOW_I = "low_i"
    HIGH_I1 = "high_i1"
    HIGH_I2 = "high_i2"
    HIGH_I3 = "high_i3"

    @classmethod
    def parse(cls, value) -> "LayoutKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ConfigurationError(f"unknown layout {value!r}; expected one of {valid}")


DEFAULT_LAYOUT = LayoutKind.HIGH_I3


@dataclass(frozen=True)
class SlotTag:
    """Identity of one batch slot: who it is and which augmentation it got.

    ``member`` is 0 for labeled slots and 1..mu for the unlabeled members of
    group ``group``.
    """

    role: str
    aug: str
    group: int
    member: int = 0


@dataclass
class OrderedBatch:
    """A length-Q slot sequence with recoverable tags.

    ``labels`` carries the B labeled targets when the batch is built for
    training; pure layout bookkeeping leaves it None.
    """

    slots: list  # list of (sample, SlotTag)
    layout: LayoutKind
    batch_size: int
    mu: int
    labels: Optional[np.ndarray] = None
    _index: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def tags(self) -> list:
        return [tag for _, tag in self.slots]

    @property
    def samples(self) -> list:
        return [sample for sample, _ in self.slots]

    def slot_positions(self):
        """Index arrays mapping (role, aug, group, member) to slot position.

        Returns (labeled_weak[B], labeled_strong[B], unlabeled_weak[B, mu],
        unlabeled_strong[B, mu]).
        """
        if not self._index:
            b, mu = self.batch_size, self.mu
            lw = np.empty(b, dtype=np.int64)
            ls = np.empty(b, dtype=np.int64)
            uw = np.empty((b, mu), dtype=np.int64)
            us = np.empty((b, mu), dtype=np.int64)
            for pos, (_, tag) in enumerate(self.slots):
                if tag.role == LABELED:
                    (lw if tag.aug == WEAK else ls)[tag.group] = pos
                else:
                    (uw if tag.aug == WEAK else us)[tag.group, tag.member - 1] = pos
            self._index.update(lw=lw, ls=ls, uw=uw, us=us)
        idx = self._index
        return idx["lw"], idx["ls"], idx["uw"], idx["us"]

    def stack(self) -> torch.Tensor:
        """Stack slot samples into one tensor in slot order."""
        samples = [torch.as_tensor(s) for s in self.samples]
        return torch.stack(samples, dim=0)


def expected_slot_count(batch_size: int, mu: int) -> int:
    return 2 * (1 + mu) * batch_size


def _unlabeled_tag(flat_j: int, mu: int, aug: str) -> SlotTag:
    return SlotTag(UNLABELED, aug, group=flat_j // mu, member=flat_j % mu + 1)


def layout_tags(kind: LayoutKind, batch_size: int, mu: int) -> list:
    """The slot-tag sequence for a layout, before any samples are attached."""
    if batch_size < 1 or mu < 1:
        raise BatchAssemblyError(f"need batch_size >= 1 and mu >= 1, got {batch_size}, {mu}")
    b = batch_size
    tags: list = []
    if kind == LayoutKind.LOW_I:
        tags += [SlotTag(LABELED, WEAK, i) for i in range(b)]
        tags += [SlotTag(LABELED, STRONG, i) for i in range(b)]
        tags += [_unlabeled_tag(j, mu, WEAK) for j in range(mu * b)]
        tags += [_unlabeled_tag(j, mu, STRONG) for j in range(mu * b)]
    elif kind == LayoutKind.HIGH_I1:
        blocks = 2 * (mu + 1)
        if b % blocks != 0:
            raise ConfigurationError(
                f"high_i1 splits the batch into {blocks} blocks and needs "
                f"batch_size divisible by 2*(mu+1); got batch_size={b}, mu={mu}"
            )
        per_l = b // blocks
        per_u = mu * b // blocks
        for block in range(blocks):
            lo_l, lo_u = block * per_l, block * per_u
            tags += [SlotTag(LABELED, WEAK, i) for i in range(lo_l, lo_l + per_l)]
            tags += [SlotTag(LABELED, STRONG, i) for i in range(lo_l, lo_l + per_l)]
            tags += [_unlabeled_tag(j, mu, WEAK) for j in range(lo_u, lo_u + per_u)]
            tags += [_unlabeled_tag(j, mu, STRONG) for j in range(lo_u, lo_u + per_u)]
    elif kind == LayoutKind.HIGH_I2:
        for i in range(b):
            tags.append(SlotTag(LABELED, WEAK, i))
            tags.append(SlotTag(LABELED, STRONG, i))
            tags += [_unlabeled_tag(i * mu + m, mu, WEAK) for m in range(mu)]
            tags += [_unlabeled_tag(i * mu + m, mu, STRONG) for m in range(mu)]
    elif kind == LayoutKind.HIGH_I3:
        for i in range(b):
            tags.append(SlotTag(LABELED, WEAK, i))
            tags += [_unlabeled_tag(i * mu + m, mu, WEAK) for m in range(mu)]
            tags.append(SlotTag(LABELED, STRONG, i))
            tags += [_unlabeled_tag(i * mu + m, mu, STRONG) for m in range(mu)]
    else:  # pragma: no cover - enum is closed
        raise ConfigurationError(f"unhandled layout {kind}")
    return tags


def interdigitate(
    labeled_weak: Sequence,
    labeled_strong: Sequence,
    unlabeled_weak: Sequence,
    unlabeled_strong: Sequence,
    kind: LayoutKind = DEFAULT_LAYOUT,
    labels: Optional[np.ndarray] = None,
) -> OrderedBatch:
    """Arrange augmented samples into the Q-slot order of the chosen layout.

    Expects B labeled samples per augmentation and mu*B unlabeled samples per
    augmentation, with the m-th member of group i at flat index i*mu + m - 1.
    """
    kind = LayoutKind.parse(kind)
    b = len(labeled_weak)
    if len(labeled_strong) != b:
        raise BatchAssemblyError(
            f"labeled weak/strong lengths differ: {b} vs {len(labeled_strong)}"
        )
    n_unlabeled = len(unlabeled_weak)
    if len(unlabeled_strong) != n_unlabeled:
        raise BatchAssemblyError(
            f"unlabeled weak/strong lengths differ: {n_unlabeled} vs {len(unlabeled_strong)}"
        )
    if b == 0 or n_unlabeled == 0 or n_unlabeled % b != 0:
        raise BatchAssemblyError(
            f"cannot group {n_unlabeled} unlabeled samples into {b} groups of equal size"
        )
    mu = n_unlabeled // b
    if labels is not None and len(labels) != b:
        raise BatchAssemblyError(f"got {len(labels)} labels for {b} labeled samples")

    pools = {
        (LABELED, WEAK): labeled_weak,
        (LABELED, STRONG): labeled_strong,
        (UNLABELED, WEAK): unlabeled_weak,
        (UNLABELED, STRONG): unlabeled_strong,
    }
    slots = []
    for tag in layout_tags(kind, b, mu):
        pool = pools[(tag.role, tag.aug)]
        flat = tag.group if tag.role == LABELED else tag.group * mu + tag.member - 1
        slots.append((pool[flat], tag))
    return OrderedBatch(slots=slots, layout=kind, batch_size=b, mu=mu, labels=labels)


def count_lu_adjacencies(batch: OrderedBatch):
    """Count circularly-adjacent slot pairs by role pairing.

    Returns (labeled-unlabeled, labeled-labeled, unlabeled-unlabeled); the
    three counts sum to Q.
    """
    roles = [tag.role for tag in batch.tags]
    q = len(roles)
    lu = ll = uu = 0
    for pos in range(q):
        a, b = roles[pos], roles[(pos + 1) % q]
        if a == b:
            if a == LABELED:
                ll += 1
            else:
                uu += 1
        else:
            lu += 1
    return lu, ll, uu


def deinterleave(batch: OrderedBatch, outputs):
    """Regroup per-slot model outputs into per-group predictions.

    ``outputs`` holds one row (or scalar) per slot, in slot order. The inverse
    of interdigitate on tags: output k is routed to the prediction slot named
    by tag k.
    """
    from .losses import GroupedPredictions  # local import; losses never imports layout

    q = expected_slot_count(batch.batch_size, batch.mu)
    if len(outputs) != q:
        raise BatchAssemblyError(f"expected {q} outputs for {q} slots, got {len(outputs)}")
    if not isinstance(outputs, torch.Tensor):
        outputs = np.asarray(outputs)
    lw, ls, uw, us = batch.slot_positions()
    return GroupedPredictions(
        p_w=outputs[lw],
        p_s=outputs[ls],
        q_w=outputs[uw.reshape(-1)].reshape(uw.shape + outputs.shape[1:]),
        q_s=outputs[us.reshape(-1)].reshape(us.shape + outputs.shape[1:]),
        y=batch.labels,
    )
