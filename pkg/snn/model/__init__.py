from .checkpoint import Checkpoint, load, save
from .layers import BatchNorm, Conv2d, Dense, Dropout, Flatten, Leaky, MaxPool2d, Module
from .ptq import calibrate_states, ptq_convert
from .spec import (
    PRESETS,
    ModelSpec,
    Network,
    StateQuantSpec,
    WeightQuantSpec,
    build_network,
    build_preset,
    infer_shapes,
)
from .weights import FULL_PRECISION_BITS, fake_quant_weights, quantize_weights, weight_scale
