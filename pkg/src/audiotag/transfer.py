"""Transfer strategies over saved checkpoints and few-shot subsets."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .architectures import ArchSpec, Network, classifier_head
from .checkpoint import CheckpointBlob

log = logging.getLogger(__name__)

STRATEGIES = ("scratch", "freeze_l1", "freeze_l3", "finetune")
BACKBONE_PREFIXES = ("input_bn", "wavegram", "layers")


@dataclass(frozen=True)
class TransferStrategy:
    kind: str
    new_n_classes: int
    head_hidden_dim: int = 512
    output: str = "sigmoid"  # "softmax" for single-label classification

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.kind!r}; choose from {STRATEGIES}")
        if self.output not in ("sigmoid", "softmax"):
            raise ValueError(f"unknown output {self.output!r}")

    @property
    def frozen(self):
        return self.kind.startswith("freeze")


@dataclass(frozen=True)
class FewShotSpec:
    shots_per_class: int | None  # None keeps every clip
    seed: int = 0

    def __post_init__(self):
        if self.shots_per_class is not None and self.shots_per_class < 1:
            raise ValueError("shots_per_class must be >= 1")


def head_for(strategy: TransferStrategy):
    if strategy.kind == "freeze_l1":
        return classifier_head(strategy.new_n_classes, strategy.output, dropout=0.0)
    if strategy.kind == "freeze_l3":
        h = strategy.head_hidden_dim
        return classifier_head(strategy.new_n_classes, strategy.output, hidden=(h, h), dropout=0.0)
    return classifier_head(strategy.new_n_classes, strategy.output)


def apply_strategy(checkpoint: CheckpointBlob | None, spec: ArchSpec | None,
                   strategy: TransferStrategy, seed=0) -> Network:
    """Build a network ready for downstream training.

    Every strategy gets a freshly initialised classifier with
    ``new_n_classes`` outputs. All but ``scratch`` copy the backbone from the
    checkpoint; the freeze strategies also fix it (parameters and batch-norm
    statistics).
    """
    if strategy.kind != "scratch" and checkpoint is None:
        raise ValueError(f"strategy {strategy.kind} needs a pretrained checkpoint")
    if checkpoint is not None and spec is not None and _backbone(spec) != _backbone(checkpoint.arch):
        raise ValueError(
            f"checkpoint backbone {checkpoint.arch.name}@{checkpoint.arch.width_scale} "
            f"does not match requested {spec.name}@{spec.width_scale}"
        )
    base = spec if spec is not None else checkpoint.arch
    new_spec = replace(base, classifier=head_for(strategy), n_classes=strategy.new_n_classes)
    net = Network(new_spec, seed=seed)
    if strategy.kind == "scratch":
        return net
    backbone = {k: v for k, v in checkpoint.tensors.items() if not k.startswith("classifier.")}
    own = {k for k in net.state_dict() if not k.startswith("classifier.")}
    if set(backbone) != own:
        raise ValueError("checkpoint tensors do not match the backbone layout")
    net.load_state_dict(backbone, strict=False)
    if strategy.frozen:
        net.freeze(BACKBONE_PREFIXES)
    return net


def _backbone(spec: ArchSpec):
    return replace(spec, classifier=(), n_classes=0)


def count_trainable(net: Network) -> int:
    return sum(p.size for p in net.trainable())


def few_shot_indices(targets, spec: FewShotSpec):
    """Indices of a per-class subset plus the classes that came up short.

    Clips are assigned to their first label. Classes with fewer clips than
    requested contribute all of them; empty classes are skipped.
    """
    targets = np.asarray(targets)
    if spec.shots_per_class is None:
        return list(range(len(targets))), []
    rng = np.random.default_rng(spec.seed)
    first = np.where(targets.any(axis=1), targets.argmax(axis=1), -1)
    chosen, short = [], []
    for k in range(targets.shape[1]):
        members = np.flatnonzero(first == k)
        if members.size < spec.shots_per_class:
            short.append(k)
            log.warning("class %d has %d clips, wanted %d", k, members.size, spec.shots_per_class)
            chosen.extend(members.tolist())
            continue
        chosen.extend(rng.choice(members, spec.shots_per_class, replace=False).tolist())
    return sorted(chosen), short


def few_shot_subset(records, spec: FewShotSpec):
    idx, _ = few_shot_indices(np.stack([r.target for r in records]), spec)
    return [records[i] for i in idx]
