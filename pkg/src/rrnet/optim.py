"""SGD with momentum and L2 weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    buffers: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")

    @classmethod
    def for_params(cls, params: Sequence[Tensor], learning_rate: float,
                   momentum: float = 0.0, weight_decay: float = 0.0) -> "OptimizerState":
        state = cls(learning_rate, momentum, weight_decay)
        state.buffers = [np.zeros_like(p.data) for p in params]
        return state


def sgd_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]],
             state: OptimizerState) -> None:
    """One update: g = grad + wd*p; buf = momentum*buf + g; p -= lr*buf.

    A missing gradient is treated as zero. Parameters get fresh arrays, so
    earlier snapshots of ``p.data`` stay valid.
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params but {len(grads)} grads")
    if not state.buffers:
        state.buffers = [np.zeros_like(p.data) for p in params]
    if len(state.buffers) != len(params):
        raise ShapeError(f"{len(state.buffers)} momentum buffers for {len(params)} params")
    for i, (p, g) in enumerate(zip(params, grads)):
        buf = state.buffers[i]
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape or buf.shape != p.data.shape:
            raise ShapeError(
                f"param {p.name or i}: shape {p.data.shape}, grad {g.shape}, buffer {buf.shape}")
        step = g + state.weight_decay * p.data if state.weight_decay else g
        buf = state.momentum * buf + step
        state.buffers[i] = buf
        p.data = p.data - state.learning_rate * buf
