"""Model specifications, architecture presets and network assembly."""
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from ..exceptions import CheckpointError, SpecError
from ..functional import conv_output_size
from ..neuron import LifConfig, unroll
from ..quantizer import DEFAULT_RATIO, EXPONENTIAL, PER_FORWARD, StateQuantizer, normalize_scheme
from ..seeding import spawn_streams
from .layers import BatchNorm, Conv2d, Dense, Dropout, Flatten, Leaky, MaxPool2d, Module
from .weights import FULL_PRECISION_BITS, quantize_weights

logger = logging.getLogger(__name__)

LAYER_KINDS = ('conv', 'dense', 'maxpool', 'batchnorm', 'dropout', 'flatten', 'lif')
PRESETS = ('fmnist', 'shd', 'dvs', 'tiny')
OVERRIDE_KEYS = ('beta', 'theta', 'alpha', 'dropout', 'hidden', 'num_classes', 'input_shape', 'in_features')

DEFAULT_BETA = 0.9
DEFAULT_THETA = 1.0
DEFAULT_ALPHA = 2.0
DEFAULT_DROPOUT = 0.25


@dataclass
class WeightQuantSpec:
    n_bits: int


@dataclass
class StateQuantSpec:
    n_bits: int
    scheme: str = EXPONENTIAL
    ratio: float = DEFAULT_RATIO
    observer: str = PER_FORWARD
    momentum: float = 0.1
    levels_below: Optional[int] = None
    ratio_below: Optional[float] = None
    ratio_above: Optional[float] = None

    def __post_init__(self):
        self.scheme = normalize_scheme(self.scheme)

    def build(self, theta, n_bits=None):
        return StateQuantizer(
            n_bits=n_bits or self.n_bits,
            scheme=self.scheme,
            theta=theta,
            ratio=self.ratio,
            observer_mode=self.observer,
            momentum=self.momentum,
            levels_below=self.levels_below,
            ratio_below=self.ratio_below,
            ratio_above=self.ratio_above,
        )


def infer_shapes(input_shape, layers):
    """Per-sample output shape of every layer; raises on a composition break."""
    shape = tuple(input_shape)
    shapes = []
    for index, layer in enumerate(layers):
        kind = layer['kind']
        where = f"layer {index} ({kind})"
        if kind == 'conv':
            if len(shape) != 3 or shape[0] != layer['in_channels']:
                raise SpecError(f"{where} expects [{layer['in_channels']}, H, W], got {list(shape)}")
            kernel, stride, padding = layer['kernel'], layer.get('stride', 1), layer.get('padding', 0)
            if kernel > shape[1] + 2 * padding or kernel > shape[2] + 2 * padding:
                raise SpecError(f"{where} kernel {kernel} larger than padded input {list(shape)}")
            shape = (
                layer['out_channels'],
                conv_output_size(shape[1], kernel, stride, padding),
                conv_output_size(shape[2], kernel, stride, padding),
            )
        elif kind == 'maxpool':
            window = layer.get('window', 2)
            if len(shape) != 3 or shape[1] % window or shape[2] % window:
                raise SpecError(f"{where} cannot pool {list(shape)} with window {window}")
            shape = (shape[0], shape[1] // window, shape[2] // window)
        elif kind == 'batchnorm':
            if shape[0] != layer['num_features']:
                raise SpecError(f"{where} has {layer['num_features']} features, input has {shape[0]}")
        elif kind == 'flatten':
            shape = (int(np.prod(shape)),)
        elif kind == 'dense':
            if shape != (layer['in_features'],):
                raise SpecError(f"{where} expects {layer['in_features']} features, got {list(shape)}")
            shape = (layer['out_features'],)
        elif kind not in ('lif', 'dropout'):
            raise SpecError(f"{where}: unknown layer kind")
        shapes.append(shape)
    return shapes


@dataclass
class ModelSpec:
    name: str
    input_shape: tuple
    layers: list
    weight_quant: Optional[WeightQuantSpec] = None
    state_quant: Optional[StateQuantSpec] = None
    seed: int = 0
    output_shape: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self.input_shape = tuple(int(extent) for extent in self.input_shape)
        if isinstance(self.weight_quant, dict):
            self.weight_quant = WeightQuantSpec(**self.weight_quant)
        if isinstance(self.state_quant, dict):
            self.state_quant = StateQuantSpec(**self.state_quant)
        if not self.layers:
            raise SpecError("a model needs at least one layer")
        shapes = infer_shapes(self.input_shape, self.layers)
        if self.layers[-1]['kind'] != 'lif':
            raise SpecError("the output layer must be a spiking (lif) layer")
        self.output_shape = shapes[-1]

    @property
    def num_classes(self):
        return self.output_shape[0]

    def to_dict(self):
        data = asdict(self)
        data.pop('output_shape')
        data['input_shape'] = list(self.input_shape)
        return data

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as exc:
            raise SpecError(f"malformed model spec: {exc}") from exc

    def with_quant(self, weight_quant=None, state_quant=None, seed=None):
        return replace(
            self,
            layers=[dict(layer) for layer in self.layers],
            weight_quant=weight_quant,
            state_quant=state_quant,
            seed=self.seed if seed is None else seed,
        )


def _lif(options):
    return {'kind': 'lif', 'beta': options['beta'], 'theta': options['theta'], 'alpha': options['alpha']}


def _conv_block(in_channels, out_channels, options):
    return [
        {'kind': 'conv', 'in_channels': in_channels, 'out_channels': out_channels, 'kernel': 5},
        {'kind': 'batchnorm', 'num_features': out_channels},
        {'kind': 'maxpool', 'window': 2},
        _lif(options),
    ]


def _flat_size(input_shape, channels):
    _, height, width = input_shape
    for _ in channels:
        height = conv_output_size(height, 5) // 2
        width = conv_output_size(width, 5) // 2
    return channels[-1] * height * width


def _tiny(options):
    in_features = int(np.prod(options['input_shape']))
    return [
        {'kind': 'flatten'},
        {'kind': 'dense', 'in_features': in_features, 'out_features': options['hidden']},
        _lif(options),
        {'kind': 'dense', 'in_features': options['hidden'], 'out_features': options['num_classes']},
        _lif(options),
    ]


def _fmnist(options):
    layers = _conv_block(options['input_shape'][0], 16, options) + _conv_block(16, 64, options)
    return layers + [
        {'kind': 'flatten'},
        {'kind': 'dense', 'in_features': _flat_size(options['input_shape'], (16, 64)),
         'out_features': options['num_classes']},
        _lif(options),
    ]


def _dvs(options):
    layers = _conv_block(options['input_shape'][0], 16, options) + _conv_block(16, 32, options)
    return layers + [
        {'kind': 'flatten'},
        {'kind': 'dropout', 'p': options['dropout']},
        {'kind': 'dense', 'in_features': _flat_size(options['input_shape'], (16, 32)),
         'out_features': options['num_classes']},
        _lif(options),
    ]


def _shd(options):
    layers = []
    widths = [options['input_shape'][0], options['hidden'], options['num_classes']]
    for in_features, out_features in zip(widths, widths[1:]):
        layers += [
            {'kind': 'dropout', 'p': options['dropout']},
            {'kind': 'dense', 'in_features': in_features, 'out_features': out_features},
            {'kind': 'batchnorm', 'num_features': out_features},
            _lif(options),
        ]
    return layers


_PRESETS = {
    'tiny': (_tiny, {'input_shape': (1, 28, 28), 'hidden': 128, 'num_classes': 10}),
    'fmnist': (_fmnist, {'input_shape': (1, 28, 28), 'num_classes': 10}),
    'dvs': (_dvs, {'input_shape': (2, 56, 112), 'num_classes': 11}),
    'shd': (_shd, {'input_shape': (700,), 'hidden': 1000, 'num_classes': 20}),
}


def build_preset(name, overrides=None, seed=0):
    """Architecture preset by name, with optional hyperparameter overrides."""
    if name not in _PRESETS:
        raise SpecError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    overrides = dict(overrides or {})
    unknown = sorted(set(overrides) - set(OVERRIDE_KEYS))
    if unknown:
        raise SpecError(f"unknown preset overrides: {', '.join(unknown)}")
    builder, defaults = _PRESETS[name]
    options = {
        'beta': DEFAULT_BETA,
        'theta': DEFAULT_THETA,
        'alpha': DEFAULT_ALPHA,
        'dropout': DEFAULT_DROPOUT,
        'hidden': None,
        **defaults,
    }
    in_features = overrides.pop('in_features', None)
    if in_features is not None:
        if len(options['input_shape']) != 1 and name != 'tiny':
            raise SpecError(f"in_features does not apply to the convolutional preset {name!r}")
        overrides.setdefault('input_shape', (in_features,))
    options.update({key: value for key, value in overrides.items() if value is not None})
    options['input_shape'] = tuple(options['input_shape'])
    return ModelSpec(name=name, input_shape=options['input_shape'], layers=builder(options), seed=seed)


class Network(Module):
    """A feed-forward stack of layers unrolled over time."""

    def __init__(self, spec, layers):
        self.spec = spec
        self.layers = layers

    def __repr__(self):
        return f"Network({self.spec.name}, {len(self.layers)} layers)"

    def forward(self, inputs):
        return unroll(self.layers, inputs)

    def layer_name(self, index):
        return f"{index}.{self.layers[index].kind}"

    def named_parameters(self):
        return {
            f"{self.layer_name(i)}.{name}": tensor
            for i, layer in enumerate(self.layers)
            for name, tensor in layer.named_parameters().items()
        }

    def parameters(self):
        return list(self.named_parameters().values())

    def named_buffers(self):
        return {
            f"{self.layer_name(i)}.{name}": array
            for i, layer in enumerate(self.layers)
            for name, array in layer.named_buffers().items()
        }

    def state_dict(self):
        tensors = {name: tensor.data for name, tensor in self.named_parameters().items()}
        tensors.update(self.named_buffers())
        return tensors

    def load_state_dict(self, tensors):
        expected = self.state_dict()
        missing = sorted(set(expected) - set(tensors))
        unexpected = sorted(set(tensors) - set(expected))
        if missing or unexpected:
            raise CheckpointError(f"state mismatch; missing {missing}, unexpected {unexpected}")
        for name, tensor in self.named_parameters().items():
            if tensors[name].shape != tensor.shape:
                raise CheckpointError(f"{name}: stored shape {tensors[name].shape}, model {tensor.shape}")
            tensor.data = np.array(tensors[name], dtype=np.float32)
        for i, layer in enumerate(self.layers):
            prefix = f"{self.layer_name(i)}."
            buffers = {key[len(prefix):]: value for key, value in tensors.items() if key.startswith(prefix)}
            if layer.named_buffers():
                layer.load_buffers(buffers)

    def train(self, mode=True):
        self.training = mode
        for layer in self.layers:
            layer.train(mode)
        return self

    def reset(self):
        for layer in self.layers:
            layer.reset()

    def zero_grad(self):
        for tensor in self.parameters():
            tensor.zero_grad()

    def quantizers(self):
        return {
            self.layer_name(i): layer.quantizer
            for i, layer in enumerate(self.layers)
            if isinstance(layer, Leaky) and layer.quantizer is not None
        }

    def unfreeze_states(self):
        for quantizer in self.quantizers().values():
            quantizer.unfreeze()

    def attach_state_quant(self, state_quant):
        """Attach a fresh state quantizer to every LIF layer."""
        self.spec = replace(self.spec, state_quant=state_quant)
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Leaky):
                bits = self.spec.layers[i].get('state_bits')
                layer.config.state_quant = state_quant.build(layer.config.theta, n_bits=bits)

    def quantize_weights_(self, n_bits):
        """Replace every weight tensor by its fake-quantized value in place."""
        scales = {}
        if n_bits >= FULL_PRECISION_BITS:
            return scales
        for i, layer in enumerate(self.layers):
            if isinstance(layer, (Dense, Conv2d)):
                bits = self.spec.layers[i].get('weight_bits', n_bits)
                layer.weight.data, scales[f"{self.layer_name(i)}.weight"] = quantize_weights(layer.weight.data, bits)
                layer.weight_bits = bits
        self.spec = replace(self.spec, weight_quant=WeightQuantSpec(n_bits))
        return scales

    def weight_scales(self):
        scales = {}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, (Dense, Conv2d)) and layer.weight_bits is not None:
                _, scales[f"{self.layer_name(i)}.weight"] = quantize_weights(layer.weight.data, layer.weight_bits)
        return scales


def build_network(spec):
    """Instantiate ``spec`` with weights drawn from its ``init`` PRNG stream."""
    streams = spawn_streams(spec.seed)
    init_rng, dropout_rng = streams['init'], streams['dropout']
    default_weight_bits = spec.weight_quant.n_bits if spec.weight_quant else None
    layers = []
    for layer in spec.layers:
        kind = layer['kind']
        weight_bits = layer.get('weight_bits', default_weight_bits)
        if weight_bits is not None and weight_bits >= FULL_PRECISION_BITS:
            weight_bits = None
        if kind == 'dense':
            layers.append(Dense(layer['in_features'], layer['out_features'], init_rng, weight_bits=weight_bits))
        elif kind == 'conv':
            layers.append(Conv2d(
                layer['in_channels'], layer['out_channels'], layer['kernel'], init_rng,
                stride=layer.get('stride', 1), padding=layer.get('padding', 0), weight_bits=weight_bits,
            ))
        elif kind == 'maxpool':
            layers.append(MaxPool2d(layer.get('window', 2)))
        elif kind == 'batchnorm':
            layers.append(BatchNorm(layer['num_features']))
        elif kind == 'dropout':
            layers.append(Dropout(layer['p'], dropout_rng))
        elif kind == 'flatten':
            layers.append(Flatten())
        elif kind == 'lif':
            theta = layer.get('theta', DEFAULT_THETA)
            quantizer = None
            if spec.state_quant is not None:
                quantizer = spec.state_quant.build(theta, n_bits=layer.get('state_bits'))
            layers.append(Leaky(LifConfig(
                beta=layer.get('beta', DEFAULT_BETA),
                theta=theta,
                alpha=layer.get('alpha', DEFAULT_ALPHA),
                state_quant=quantizer,
            )))
        else:
            raise SpecError(f"unknown layer kind {kind!r}")
    logger.debug(f"Built {spec.name} network with {len(layers)} layers")
    return Network(spec, layers)
