"""Layer objects the model presets are assembled from."""
import logging

import numpy as np

from .. import functional as F
from ..exceptions import ShapeError
from ..neuron import LifConfig, LifState, lif_step
from ..tensor import Tensor
from .weights import fake_quant_weights

logger = logging.getLogger(__name__)


class Module:
    """Base class: parameters, buffers and the train/eval switch."""

    kind = None
    training = True

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def named_parameters(self):
        return {}

    def named_buffers(self):
        return {}

    def load_buffers(self, buffers):
        pass

    def train(self, mode=True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)

    def reset(self):
        pass


def _uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Dense(Module):
    kind = 'dense'

    def __init__(self, in_features, out_features, rng, weight_bits=None):
        self.in_features = in_features
        self.out_features = out_features
        self.weight_bits = weight_bits
        self.weight = Tensor(_uniform_init(rng, (in_features, out_features), in_features), requires_grad=True)
        self.bias = Tensor(_uniform_init(rng, (out_features,), in_features), requires_grad=True)

    def __repr__(self):
        return f"Dense({self.in_features}, {self.out_features}, weight_bits={self.weight_bits})"

    def effective_weight(self):
        if self.weight_bits is None:
            return self.weight
        return fake_quant_weights(self.weight, self.weight_bits)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"dense layer expects [B, {self.in_features}], got {x.shape}")
        return x @ self.effective_weight() + self.bias

    def named_parameters(self):
        return {'weight': self.weight, 'bias': self.bias}


class Conv2d(Module):
    kind = 'conv'

    def __init__(self, in_channels, out_channels, kernel, rng, stride=1, padding=0, weight_bits=None):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.weight_bits = weight_bits
        fan_in = in_channels * kernel * kernel
        self.weight = Tensor(
            _uniform_init(rng, (out_channels, in_channels, kernel, kernel), fan_in), requires_grad=True
        )
        self.bias = Tensor(_uniform_init(rng, (out_channels,), fan_in), requires_grad=True)

    def __repr__(self):
        return f"Conv2d({self.in_channels}, {self.out_channels}, {self.kernel}, weight_bits={self.weight_bits})"

    def effective_weight(self):
        if self.weight_bits is None:
            return self.weight
        return fake_quant_weights(self.weight, self.weight_bits)

    def forward(self, x):
        out = F.conv2d(x, self.effective_weight(), stride=self.stride, padding=self.padding)
        return out + self.bias.reshape(1, self.out_channels, 1, 1)

    def named_parameters(self):
        return {'weight': self.weight, 'bias': self.bias}


class MaxPool2d(Module):
    kind = 'maxpool'

    def __init__(self, window=2):
        self.window = window

    def forward(self, x):
        return F.maxpool2d(x, self.window)


class BatchNorm(Module):
    kind = 'batchnorm'

    def __init__(self, num_features):
        self.num_features = num_features
        self.gamma = Tensor(np.ones(num_features, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(num_features, dtype=np.float32), requires_grad=True)
        self.stats = F.RunningStats(num_features)

    def forward(self, x):
        return F.batchnorm(x, self.gamma, self.beta, self.stats, training=self.training)

    def named_parameters(self):
        return {'gamma': self.gamma, 'beta': self.beta}

    def named_buffers(self):
        return {
            'running_mean': self.stats.mean,
            'running_var': self.stats.var,
            'tracked': np.asarray([self.stats.tracked], dtype=np.float32),
        }

    def load_buffers(self, buffers):
        self.stats.mean = np.array(buffers['running_mean'], dtype=np.float32)
        self.stats.var = np.array(buffers['running_var'], dtype=np.float32)
        self.stats.tracked = int(buffers['tracked'][0])


class Dropout(Module):
    kind = 'dropout'

    def __init__(self, p, rng):
        self.p = p
        self.rng = rng

    def forward(self, x):
        return F.dropout(x, self.p, self.training, self.rng)


class Flatten(Module):
    kind = 'flatten'

    def forward(self, x):
        return x.reshape(x.shape[0], -1)


class Leaky(Module):
    """A layer of LIF neurons that owns its membrane state.

    With ``record_membrane`` set, the stored membrane of every step is kept
    in ``membranes`` (used for readout losses).
    """

    kind = 'lif'

    def __init__(self, config=None, record_membrane=False):
        self.config = config or LifConfig()
        self.state = LifState()
        self.record_membrane = record_membrane
        self.membranes = []

    def __repr__(self):
        return f"Leaky(beta={self.config.beta}, theta={self.config.theta}, quant={self.quantizer})"

    @property
    def quantizer(self):
        return self.config.state_quant

    def reset(self):
        self.state = LifState()
        self.membranes = []

    def forward(self, x):
        spikes, self.state = lif_step(self.state, x, self.config)
        if self.record_membrane:
            self.membranes.append(self.state.u)
        return spikes
