"""AdaGrad with coupled L2 weight decay, plus He initialization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    """Per-tensor squared-gradient accumulators and hyperparameters."""

    lr: float = 1e-4
    weight_decay: float = 1e-5
    eps: float = 1e-8
    acc: dict[str, np.ndarray] = field(default_factory=dict)


def adagrad_step(params: dict, grads: dict, state: OptimizerState) -> None:
    """One in-place update: decay folds into the gradient before accumulation."""
    for name, theta in params.items():
        g = grads[name] + state.weight_decay * theta
        if name not in state.acc:
            state.acc[name] = np.zeros_like(theta)
        a = state.acc[name]
        a += g * g
        theta -= state.lr * g / (np.sqrt(a) + state.eps)


def he_init(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean normal draw with variance 2/fan_in."""
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
