"""SGD with momentum, weight decay and a piecewise-constant lr schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 4e-4
    schedule: tuple = field(default_factory=tuple)  # ((epoch, multiplier), ...)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        sched = tuple((int(e), float(m)) for e, m in self.schedule)
        epochs = [e for e, _ in sched]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("schedule epochs must be strictly increasing")
        object.__setattr__(self, "schedule", sched)

    def lr_at(self, epoch: int) -> float:
        lr = self.learning_rate
        for e, mult in self.schedule:
            if e <= epoch:
                lr *= mult
        return lr


def sgd_step(params: Iterable, cfg: OptimizerConfig, epoch: int) -> None:
    """v <- mu*v - lr*(g + wd*w); w <- w + v; then zero the gradients."""
    lr = cfg.lr_at(epoch)
    for p in params:
        step = p.grad + cfg.weight_decay * p.data if cfg.weight_decay else p.grad
        p.velocity *= cfg.momentum
        p.velocity -= lr * step
        # skipping zero steps keeps values bit-identical (e.g. -0.0 stays -0.0)
        np.add(p.data, p.velocity, out=p.data, where=p.velocity != 0)
        p.zero_grad()
