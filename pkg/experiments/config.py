"""Experiment configuration: JSON documents validated into an immutable dataclass."""
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from rest_framework import serializers

from snn.losses import SpikeCountTargets
from snn.model import StateQuantSpec, WeightQuantSpec, build_preset

from .serializers import PTQ_MODES, ExperimentConfigSerializer

logger = logging.getLogger(__name__)

PTQ_TARGETS = {'ptq_w': 'weights', 'ptq_s': 'states', 'ptq_ws': 'both'}
WEIGHT_MODES = frozenset({'qat_w', 'qat_squat'})
STATE_MODES = frozenset({'squat_s', 'qat_squat'})
SCHEME_FREE = frozenset({'fp32', 'qat_w', 'ptq_w'})


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = 'fmnist'
    preset: str = 'tiny'
    overrides: dict = field(default_factory=dict)
    mode: str = 'fp32'
    n_bits: int = 8
    scheme: str = 'exponential'
    ratio: float = 2.0
    epochs: int = 3
    patience: int = 20
    trials: int = 1
    seed: int = 0
    lr: float = 5e-4
    lr_min: float = 0.0
    batch_size: int = 128
    steps_train: int = 25
    steps_test: int = 25
    loss: str = 'ce_count'
    correct_rate: float = 1.0
    incorrect_rate: float = 0.0
    train_subset: Optional[int] = 10000
    test_subset: Optional[int] = None
    calib_subset: int = 1024
    data_dir: Optional[str] = None
    synthetic: Optional[dict] = None
    train_events: Optional[str] = None
    test_events: Optional[str] = None
    source_checkpoint: Optional[str] = None
    output_dir: Optional[str] = None

    @property
    def is_ptq(self):
        return self.mode in PTQ_MODES

    @property
    def cell_bits(self):
        """Bit width as reported in tables; ``None`` for full precision."""
        return None if self.mode == 'fp32' else self.n_bits

    @property
    def cell_scheme(self):
        return None if self.mode in SCHEME_FREE else self.scheme

    def targets(self):
        return SpikeCountTargets(self.correct_rate, self.incorrect_rate)

    def model_spec(self, input_shape=None, num_classes=None):
        """Preset spec with the quantization attachments of ``mode``.

        Shapes taken from the dataset fill in whatever the overrides leave open.
        """
        overrides = {}
        if input_shape is not None:
            overrides['input_shape'] = tuple(input_shape)
        if num_classes is not None:
            overrides['num_classes'] = num_classes
        overrides.update(self.overrides)
        if 'in_features' in self.overrides:
            overrides.pop('input_shape', None)
        spec = build_preset(self.preset, overrides, seed=self.seed)
        weight_quant = WeightQuantSpec(self.n_bits) if self.mode in WEIGHT_MODES else None
        state_quant = None
        if self.mode in STATE_MODES:
            state_quant = StateQuantSpec(self.n_bits, self.scheme, ratio=self.ratio)
        return spec.with_quant(weight_quant=weight_quant, state_quant=state_quant)

    def for_cell(self, mode, n_bits=None, scheme=None, seed=None):
        return replace(
            self,
            mode=mode,
            n_bits=self.n_bits if n_bits is None else n_bits,
            scheme=self.scheme if scheme is None else scheme,
            seed=self.seed if seed is None else seed,
        )

    def to_dict(self):
        return asdict(self)


def parse_config(data, **overrides):
    """Validate a config mapping; keyword overrides win over ``data``."""
    merged = dict(data)
    merged.update({key: value for key, value in overrides.items() if value is not None})
    serializer = ExperimentConfigSerializer(data=merged)
    serializer.is_valid(raise_exception=True)
    validated = dict(serializer.validated_data)
    validated['overrides'] = dict(validated.get('overrides') or {})
    if 'input_shape' in validated['overrides']:
        validated['overrides']['input_shape'] = tuple(validated['overrides']['input_shape'])
    if validated.get('synthetic') is not None:
        validated['synthetic'] = dict(validated['synthetic'])
    return ExperimentConfig(**validated)


def load_config(path, **overrides):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise serializers.ValidationError({'config': [f'{path} is not valid JSON: {exc}']}) from exc
    if not isinstance(data, dict):
        raise serializers.ValidationError({'config': [f'{path} must hold a JSON object']})
    logger.debug(f"Loaded experiment config from {path}")
    return parse_config(data, **overrides)
