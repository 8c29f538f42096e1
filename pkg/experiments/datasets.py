"""Dataset assembly for experiment runs."""
import logging
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings

from snn.data import SequenceDataset, StaticDataset, SyntheticSpec, load_event_tensor, load_idx, synth_spikes

logger = logging.getLogger(__name__)

FASHION_MNIST_DIR = 'fashion-mnist'
FASHION_MNIST_FILES = {
    'train': ('train-images-idx3-ubyte', 'train-labels-idx1-ubyte'),
    'test': ('t10k-images-idx3-ubyte', 't10k-labels-idx1-ubyte'),
}


@dataclass
class ExperimentData:
    train: object
    test: object
    calib: object
    num_classes: int
    input_shape: tuple


def data_root(config):
    return Path(config.data_dir) if config.data_dir else Path(settings.SQUAT_DATA_DIR)


def _fashion_mnist(config):
    root = data_root(config) / FASHION_MNIST_DIR
    splits = {}
    for split, (images, labels) in FASHION_MNIST_FILES.items():
        raw = load_idx(root / images, root / labels)
        # [N, H, W] -> [N, 1, H, W]
        splits[split] = StaticDataset(raw.images[:, None], raw.labels)
    return splits['train'], splits['test'], 10


def _synthetic(config):
    options = dict(config.synthetic or {})
    train_samples = options.pop('train_samples', 512)
    test_samples = options.pop('test_samples', 256)
    steps = max(config.steps_train, config.steps_test)
    common = {
        'num_classes': options.get('num_classes', 4),
        'input_size': options.get('input_size', 64),
        'num_steps': steps,
        'low_rate': options.get('low_rate', 0.02),
        'high_rate': options.get('high_rate', 0.6),
    }
    train = synth_spikes(SyntheticSpec(num_samples=train_samples, seed=config.seed, **common))
    # Held-out samples come from a different generator seed.
    test = synth_spikes(SyntheticSpec(num_samples=test_samples, seed=config.seed + 1_000_003, **common))
    return SequenceDataset.from_batch(train), SequenceDataset.from_batch(test), common['num_classes']


def _events(config):
    train = load_event_tensor(config.train_events)
    test = load_event_tensor(config.test_events)
    num_classes = int(max(train.labels.max(), test.labels.max())) + 1
    return SequenceDataset.from_batch(train), SequenceDataset.from_batch(test), num_classes


LOADERS = {
    'fmnist': _fashion_mnist,
    'synthetic': _synthetic,
    'events': _events,
}


def load_experiment_data(config):
    train, test, num_classes = LOADERS[config.dataset](config)
    if config.train_subset:
        train = train.subset(config.train_subset)
    if config.test_subset:
        test = test.subset(config.test_subset)
    calib = train.subset(config.calib_subset)
    logger.info(
        f"Loaded {config.dataset}: {len(train)} train, {len(test)} test, "
        f"{len(calib)} calibration samples, {num_classes} classes"
    )
    return ExperimentData(train, test, calib, num_classes, tuple(train.feature_shape))
