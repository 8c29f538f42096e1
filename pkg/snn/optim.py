"""Adam with a cosine-annealed learning rate."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericFault, SpecError

logger = logging.getLogger(__name__)


@dataclass
class OptimState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0


def cosine_lr(step, total_steps, lr_max, lr_min=0.0):
    if step < 0 or step > total_steps:
        raise SpecError(f"step {step} outside schedule of {total_steps} steps")
    if total_steps == 0:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update with bias correction.

    ``None`` entries in ``grads`` leave their parameter and moments untouched.
    """
    for index, grad in enumerate(grads):
        if grad is not None and not np.all(np.isfinite(grad)):
            raise NumericFault(f"non-finite gradient for parameter {index} at step {state.step + 1}")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for param, grad, m, v in zip(params, grads, state.m, state.v):
        if grad is None:
            continue
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        param.data -= update.astype(param.data.dtype)
    return state


class Adam:
    def __init__(self, params, lr=5e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = OptimState()

    def zero_grad(self):
        for param in self.params:
            param.zero_grad()

    def step(self, lr=None):
        return adam_step(
            self.params,
            [param.grad for param in self.params],
            self.state,
            self.lr if lr is None else lr,
            beta1=self.betas[0],
            beta2=self.betas[1],
            eps=self.eps,
        )
