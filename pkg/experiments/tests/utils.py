from experiments.config import parse_config
from experiments.datasets import load_experiment_data

SYNTHETIC = {
    'dataset': 'synthetic',
    'preset': 'tiny',
    'overrides': {'hidden': 16},
    'synthetic': {'num_classes': 3, 'input_size': 12, 'train_samples': 48, 'test_samples': 24},
    'epochs': 2,
    'batch_size': 16,
    'steps_train': 6,
    'steps_test': 6,
    'lr': 5e-3,
    'train_subset': None,
    'calib_subset': 16,
}


def synthetic_config(**changes):
    data = dict(SYNTHETIC)
    data.update(changes)
    return parse_config(data)


def synthetic_data(config=None):
    return load_experiment_data(config or synthetic_config())
