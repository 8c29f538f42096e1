"""Training, evaluation and PTQ runs for a single experiment cell."""
import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Optional

from snn.exceptions import SpecError, TrainingDiverged
from snn.losses import ce_spike_count_loss, mse_spike_loss, predict
from snn.model import Checkpoint, build_network, calibrate_states, load, ptq_convert
from snn.optim import Adam, cosine_lr
from snn.seeding import stream
from snn.tensor import no_grad

from .config import PTQ_TARGETS
from .datasets import load_experiment_data

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    record: dict
    metrics: list
    checkpoint: Optional[Checkpoint] = None

    @property
    def best_accuracy(self):
        return self.record['best_accuracy']


def run_id_for(config, group='', trial=0):
    bits = 'fp' if config.cell_bits is None else f"{config.cell_bits}b"
    parts = [group, config.mode, bits, config.cell_scheme or '', f"t{trial}", f"s{config.seed}"]
    return '-'.join(part for part in parts if part)


def make_loss(config):
    if config.loss == 'mse':
        targets = config.targets()
        return lambda spikes, labels: mse_spike_loss(spikes, labels, targets)
    if config.loss == 'ce_per_step':
        return lambda spikes, labels: ce_spike_count_loss(spikes, labels, per_step=True)
    return ce_spike_count_loss


def evaluate(network, data, config, calibrate=True):
    """Mean test loss and accuracy over the test split.

    State-quantized networks first freeze their grids with a calibration
    pass over the calibration subset, unless ``calibrate`` is off.
    """
    if calibrate and network.quantizers():
        calibrate_states(network, data.calib.batches(config.batch_size, config.steps_train))
    loss_fn = make_loss(config)
    was_training = network.training
    network.eval()
    total_loss, correct, seen = 0.0, 0, 0
    try:
        with no_grad():
            for batch in data.test.batches(config.batch_size, config.steps_test):
                spikes = network(batch.inputs)
                total_loss += float(loss_fn(spikes, batch.labels).item()) * len(batch)
                correct += int((predict(spikes) == batch.labels).sum())
                seen += len(batch)
    finally:
        network.train(was_training)
    if not seen:
        return None, 0.0
    return total_loss / seen, correct / seen


def _record(config, group, trial, epochs_run, best_accuracy, best_epoch, started, checkpoint):
    return {
        'run_id': run_id_for(config, group, trial),
        'group': group,
        'mode': config.mode,
        'n_bits': config.cell_bits,
        'scheme': config.cell_scheme,
        'trial': trial,
        'seed': config.seed,
        'config': config.to_dict(),
        'epochs_run': epochs_run,
        'best_accuracy': best_accuracy,
        'best_epoch': best_epoch,
        'wall_time': time.perf_counter() - started,
        'grid_snapshots': {name: grid.describe() for name, grid in checkpoint.grids().items()},
        'checkpoint_path': '',
    }


def train(config, data=None, group='', trial=0):
    """Train one cell with BPTT and early stopping on test accuracy.

    Returns the run record, per-epoch metrics and the best checkpoint.
    With ``epochs=0`` the untrained network is returned as is.
    """
    if config.is_ptq:
        raise SpecError(f"{config.mode} converts a trained checkpoint; use run_ptq")
    started = time.perf_counter()
    data = data or load_experiment_data(config)
    network = build_network(config.model_spec(data.input_shape, data.num_classes))
    optimizer = Adam(network.parameters(), lr=config.lr)
    data_rng = stream(config.seed, 'data')
    loss_fn = make_loss(config)
    total_steps = config.epochs * data.train.num_batches(config.batch_size)

    metrics = []
    best = Checkpoint.from_network(network, epoch=0, seed=config.seed, mode=config.mode)
    best_accuracy, best_epoch, epochs_run = 0.0, None, 0
    stale, step, lr = 0, 0, config.lr
    for epoch in range(1, config.epochs + 1):
        network.train()
        network.unfreeze_states()
        total_loss, correct, seen = 0.0, 0, 0
        for batch in data.train.batches(config.batch_size, config.steps_train, rng=data_rng):
            lr = cosine_lr(step, total_steps, config.lr, config.lr_min)
            optimizer.zero_grad()
            spikes = network(batch.inputs)
            loss = loss_fn(spikes, batch.labels)
            value = float(loss.item())
            if not math.isfinite(value):
                raise TrainingDiverged(f"loss became {value} at epoch {epoch}, step {step}", epoch=epoch, step=step)
            loss.backward()
            optimizer.step(lr=lr)
            total_loss += value * len(batch)
            correct += int((predict(spikes) == batch.labels).sum())
            seen += len(batch)
            step += 1
        metrics.append({'epoch': epoch, 'split': 'train', 'loss': total_loss / seen,
                        'accuracy': correct / seen, 'lr': lr})

        test_loss, test_accuracy = evaluate(network, data, config)
        metrics.append({'epoch': epoch, 'split': 'test', 'loss': test_loss, 'accuracy': test_accuracy, 'lr': lr})
        epochs_run = epoch
        logger.info(
            f"[{run_id_for(config, group, trial)}] epoch {epoch}/{config.epochs} "
            f"train loss {total_loss / seen:.4f} test acc {test_accuracy:.4f} lr {lr:.2e}"
        )

        if best_epoch is None or test_accuracy > best_accuracy:
            best_accuracy, best_epoch, stale = test_accuracy, epoch, 0
            best = Checkpoint.from_network(network, epoch=epoch, seed=config.seed, mode=config.mode)
        else:
            stale += 1
            if stale >= config.patience:
                logger.info(f"Early stop after epoch {epoch}: no improvement for {stale} epochs")
                break

    record = _record(config, group, trial, epochs_run, best_accuracy, best_epoch, started, best)
    return RunResult(record, metrics, best)


def run_ptq(config, source=None, data=None, group='', trial=0):
    """Convert a trained checkpoint with post-training quantization and test it."""
    if not config.is_ptq:
        raise SpecError(f"{config.mode} is not a PTQ mode")
    started = time.perf_counter()
    source = source if source is not None else load(config.source_checkpoint)
    data = data or load_experiment_data(config)
    # the converted model inherits the seed its source was trained with
    config = replace(config, seed=source.meta.get('seed', config.seed))
    calib = list(data.calib.batches(config.batch_size, config.steps_train))
    converted = ptq_convert(source, PTQ_TARGETS[config.mode], config.n_bits, config.scheme, calib,
                            ratio=config.ratio)
    network = converted.to_network()
    test_loss, test_accuracy = evaluate(network, data, config, calibrate=False)
    logger.info(f"[{run_id_for(config, group, trial)}] PTQ test acc {test_accuracy:.4f}")
    metrics = [{'epoch': 0, 'split': 'test', 'loss': test_loss, 'accuracy': test_accuracy, 'lr': None}]
    record = _record(config, group, trial, 0, test_accuracy, 0, started, converted)
    return RunResult(record, metrics, converted)


def run_cell(config, data=None, group='', trial=0, baseline=None):
    if config.is_ptq:
        return run_ptq(config, source=baseline, data=data, group=group, trial=trial)
    return train(config, data=data, group=group, trial=trial)


def evaluate_checkpoint(checkpoint, data, config):
    """Test accuracy of a stored checkpoint; frozen grids are used as stored."""
    network = checkpoint.to_network()
    unfrozen = [q for q in network.quantizers().values() if q.grid is None]
    _, accuracy = evaluate(network, data, config, calibrate=bool(unfrozen))
    return accuracy

