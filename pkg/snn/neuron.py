"""Leaky integrate-and-fire dynamics with a surrogate spike gradient."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import NumericFault, ShapeError, SpecError
from .quantizer import StateQuantizer
from .tensor import Function, Tensor, stack

logger = logging.getLogger(__name__)


@dataclass
class LifConfig:
    beta: float = 0.9
    theta: float = 1.0
    alpha: float = 2.0
    state_quant: Optional[StateQuantizer] = None
    detach_reset: bool = True

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise SpecError(f"beta must be in (0, 1), got {self.beta}")
        if not self.theta > 0.0:
            raise SpecError(f"theta must be positive, got {self.theta}")
        if not self.alpha > 0.0:
            raise SpecError(f"alpha must be positive, got {self.alpha}")


@dataclass
class LifState:
    """Membrane potentials; ``None`` stands for the all-zero start state."""

    u: Optional[Tensor] = None


def surrogate_grad(u_centered, alpha):
    """Arc-tangent surrogate derivative of the spike step."""
    x = np.pi * np.asarray(getattr(u_centered, 'data', u_centered)) * alpha
    return (1.0 / np.pi) / (1.0 + x * x)


class Spike(Function):
    custom_backward = True

    def forward(self, u_centered, alpha):
        self.saved = (u_centered, alpha)
        return (u_centered > 0).astype(u_centered.dtype)

    def backward(self, grad):
        u_centered, alpha = self.saved
        return grad * surrogate_grad(u_centered, alpha).astype(grad.dtype)


def spike(u_centered, alpha):
    return Spike.apply(u_centered, alpha=alpha)


def lif_step(state, input_current, config):
    """Advance one time step; returns ``(spikes, new_state)``.

    The membrane is quantized after integration and before the threshold
    comparison, so spikes and the soft reset both see the stored value.
    """
    if state.u is None:
        decayed = 0.0
    elif state.u.shape != input_current.shape:
        raise ShapeError(f"state shape {state.u.shape} does not match input {input_current.shape}")
    else:
        decayed = state.u * config.beta
    u_next = input_current + decayed
    if np.isnan(u_next.data).any():
        raise NumericFault("NaN in membrane state")
    if config.state_quant is not None:
        u_next = config.state_quant(u_next)
    z = spike(u_next - config.theta, config.alpha)
    reset = z.detach() if config.detach_reset else z
    return z, LifState(u_next - reset * config.theta)


def unroll(layers, inputs):
    """Run ``layers`` over every step of ``inputs[T, ...]`` on one tape.

    Stateful layers are reset first; returns the stacked outputs of the last
    layer, one slice per time step.
    """
    if inputs.ndim == 0 or inputs.shape[0] == 0:
        raise ShapeError("input sequence has no time steps")
    for layer in layers:
        reset = getattr(layer, 'reset', None)
        if reset is not None:
            reset()
    outputs = []
    for t in range(inputs.shape[0]):
        x = inputs[t]
        for layer in layers:
            x = layer(x)
        outputs.append(x)
    return stack(outputs, axis=0)
