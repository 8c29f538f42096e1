"""Calibration passes and post-training quantization."""
import logging

from ..exceptions import DatasetError, SpecError
from ..quantizer import DEFAULT_RATIO, FROZEN, normalize_scheme
from ..tensor import no_grad
from .checkpoint import Checkpoint
from .spec import StateQuantSpec
from .weights import FULL_PRECISION_BITS

logger = logging.getLogger(__name__)

PTQ_TARGETS = ('weights', 'states', 'both')


def calibrate_states(network, batches, quantize_states=True):
    """Run ``batches`` through ``network`` and freeze every state grid.

    Each LIF quantizer records the full membrane range it sees. With
    ``quantize_states`` the layers quantize with their training observers
    during the pass; otherwise membranes pass through unquantized. Returns
    the frozen bounds per layer.
    """
    quantizers = network.quantizers()
    if not quantizers:
        return {}
    was_training = network.training
    network.eval()
    for quantizer in quantizers.values():
        if quantize_states and quantizer.observer.mode == FROZEN:
            quantizer.unfreeze()
        quantizer.begin_calibration(quantize_states)
    seen = 0
    try:
        with no_grad():
            for batch in batches:
                network(batch.inputs)
                seen += 1
        if not seen:
            raise DatasetError("empty calibration set")
        for quantizer in quantizers.values():
            quantizer.finish_calibration()
    finally:
        for quantizer in quantizers.values():
            quantizer.calibration = None
            quantizer.passthrough = False
        network.train(was_training)
    bounds = {name: quantizer.observer.bounds for name, quantizer in quantizers.items()}
    logger.debug(f"Calibrated {len(bounds)} state grids over {seen} batches")
    return bounds


def ptq_convert(checkpoint, what, n_bits, scheme, calib_data, ratio=DEFAULT_RATIO):
    """Quantize a trained checkpoint without retraining.

    Weights are replaced by their fake-quantized values first, so state
    calibration already sees the quantized weights.
    """
    if what not in PTQ_TARGETS:
        raise SpecError(f"ptq target must be one of {', '.join(PTQ_TARGETS)}, got {what!r}")
    network = checkpoint.to_network()
    scales = {}
    if what in ('weights', 'both'):
        scales = network.quantize_weights_(n_bits)
    if what in ('states', 'both'):
        batches = list(calib_data)
        if not batches:
            raise DatasetError("empty calibration set")
        network.attach_state_quant(StateQuantSpec(n_bits, scheme=normalize_scheme(scheme), ratio=ratio))
        calibrate_states(network, batches, quantize_states=False)
    elif n_bits >= FULL_PRECISION_BITS:
        logger.info("PTQ with full-precision bit width leaves weights unchanged")
    meta = dict(checkpoint.meta)
    meta['ptq'] = {'what': what, 'n_bits': n_bits, 'scheme': scheme, 'weight_scales': scales}
    return Checkpoint.from_network(network, **meta)
