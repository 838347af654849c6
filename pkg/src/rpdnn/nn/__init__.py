"""Numeric kernel: layers with hand-derived backward passes, AdaGrad,
He init, finite-difference gradient checking, binary checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, run_gradient_suite
from .optim import OptimizerState, adagrad_step, he_init

__all__ = [
    "load_checkpoint",
    "save_checkpoint",
    "grad_check",
    "run_gradient_suite",
    "OptimizerState",
    "adagrad_step",
    "he_init",
]
