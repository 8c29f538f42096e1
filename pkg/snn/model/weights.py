"""Per-tensor symmetric weight fake-quantization."""
import logging

import numpy as np

from ..exceptions import GridError
from ..quantizer import ste_backward
from ..tensor import Function

logger = logging.getLogger(__name__)

# bit widths at or above this leave weights untouched
FULL_PRECISION_BITS = 32
MAX_WEIGHT_BITS = 16


def code_range(n_bits):
    """Largest integer code of a symmetric ``n_bits`` quantizer."""
    if not isinstance(n_bits, (int, np.integer)) or not 2 <= n_bits <= MAX_WEIGHT_BITS:
        raise GridError(f"weight n_bits must be an integer in [2, {MAX_WEIGHT_BITS}], got {n_bits!r}")
    return 2 ** (n_bits - 1) - 1


def weight_scale(w, n_bits):
    """``max|w| / qmax`` rounded to a mantissa short enough that every
    ``code * scale`` with ``|code| <= qmax`` is exact in float32."""
    qmax = code_range(n_bits)
    peak = float(np.max(np.abs(w))) if np.size(w) else 0.0
    if peak == 0.0:
        return 0.0
    mantissa, exponent = np.frexp(peak / qmax)
    keep = 24 - qmax.bit_length()
    mantissa = np.round(mantissa * 2.0 ** keep) / 2.0 ** keep
    return float(np.float32(np.ldexp(mantissa, exponent)))


def quantize_weights(w, n_bits):
    """Return the fake-quantized array and the scale it used."""
    w = np.asarray(w)
    if n_bits >= FULL_PRECISION_BITS:
        return w.copy(), None
    qmax = code_range(n_bits)
    scale = weight_scale(w, n_bits)
    if scale == 0.0:
        return np.zeros_like(w), 0.0
    codes = np.clip(np.rint(w.astype(np.float64) / scale), -qmax, qmax)
    return (codes * scale).astype(w.dtype), scale


class FakeQuantWeights(Function):
    custom_backward = True

    def forward(self, w, n_bits):
        quantized, _ = quantize_weights(w, n_bits)
        return quantized

    def backward(self, grad):
        return ste_backward(grad)


def fake_quant_weights(w_real, n_bits):
    """Quantized weights for the forward pass; gradients reach ``w_real`` unchanged."""
    return FakeQuantWeights.apply(w_real, n_bits=n_bits)
