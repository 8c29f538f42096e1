"""Run matrices: every (mode, bits, scheme) cell across paired-seed trials."""
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from snn.exceptions import MissingBaseline, SpecError
from snn.model import load

from .config import SCHEME_FREE
from .datasets import load_experiment_data
from .serializers import MODES, PTQ_MODES
from .training import run_cell

logger = logging.getLogger(__name__)

ROW_LABELS = {
    'fp32': 'Full Precision',
    'squat_s': 'QAT States',
    'qat_w': 'QAT Weights',
    'qat_squat': 'QAT Weights and States',
    'ptq_s': 'PTQ States',
    'ptq_w': 'PTQ Weights',
    'ptq_ws': 'PTQ Weights and States',
}
# Row order of the accuracy tables, one table per scheme.
TABLE_ROWS = ('squat_s', 'qat_w', 'qat_squat', 'ptq_s', 'ptq_w', 'ptq_ws')


@dataclass(frozen=True)
class Cell:
    mode: str
    n_bits: object
    scheme: object
    trial: int

    @property
    def key(self):
        return self.mode, self.n_bits, self.scheme


def plan_cells(modes, bits, schemes, trials):
    """Expand the requested matrix into cells; scheme-free modes run once per bit width."""
    unknown = sorted(set(modes) - set(MODES))
    if unknown:
        raise SpecError(f"unknown modes: {', '.join(unknown)}")
    if trials < 1:
        raise SpecError(f"need at least one trial, got {trials}")
    cells = []
    for mode in modes:
        if mode == 'fp32':
            keys = [(None, None)]
        elif mode in SCHEME_FREE:
            keys = [(n_bits, None) for n_bits in bits]
        else:
            keys = [(n_bits, scheme) for scheme in schemes for n_bits in bits]
        if not keys:
            raise SpecError(f"mode {mode} needs at least one bit width and scheme")
        cells += [Cell(mode, n_bits, scheme, trial) for n_bits, scheme in keys for trial in range(trials)]
    return cells


@dataclass
class MatrixTable:
    results: list
    bits: tuple
    schemes: tuple
    accuracies: dict = field(init=False)

    def __post_init__(self):
        self.accuracies = defaultdict(list)
        for result in self.results:
            record = result.record
            self.accuracies[record['mode'], record['n_bits'], record['scheme']].append(record['best_accuracy'])

    def mean(self, mode, n_bits=None, scheme=None):
        if mode in SCHEME_FREE:
            scheme = None
        if mode == 'fp32':
            n_bits = None
        values = self.accuracies.get((mode, n_bits, scheme))
        return float(np.mean(values)) if values else None

    def rows(self, scheme):
        """``(label, [mean per bit width])`` rows of the table for ``scheme``."""
        rows = []
        for mode in TABLE_ROWS:
            means = [self.mean(mode, n_bits, scheme) for n_bits in self.bits]
            if any(value is not None for value in means):
                rows.append((ROW_LABELS[mode], means))
        return rows

    def render(self):
        lines = []
        baseline = self.mean('fp32')
        if baseline is not None:
            lines.append(f"Full Precision: {baseline:.4f}")
        for scheme in self.schemes:
            lines.append(f"[{scheme}]")
            lines.append('\t'.join(['mode'] + [f"{n_bits}-bit" for n_bits in self.bits]))
            for label, means in self.rows(scheme):
                cells = ['-' if value is None else f"{value:.4f}" for value in means]
                lines.append('\t'.join([label] + cells))
        return '\n'.join(lines)


def run_matrix(base_config, modes, bits, schemes, trials, data=None, workers=1, baselines=None,
               train_baseline=True, group=''):
    """Run every requested cell; trial ``k`` of every cell uses seed ``base_config.seed + k``.

    PTQ cells convert the fp32 checkpoint of the same trial. It comes from
    ``baselines``, the config's ``source_checkpoint``, or a baseline run
    trained here when ``train_baseline`` is set.
    """
    bits, schemes = tuple(bits), tuple(schemes)
    cells = plan_cells(modes, bits, schemes, trials)
    data = data or load_experiment_data(base_config)
    baselines = dict(baselines or {})

    def configure(cell):
        return base_config.for_cell(
            cell.mode,
            n_bits=cell.n_bits,
            scheme=cell.scheme,
            seed=base_config.seed + cell.trial,
        )

    results = {}
    needs_baseline = any(cell.mode in PTQ_MODES for cell in cells)
    if needs_baseline:
        for trial in range(trials):
            if trial in baselines:
                continue
            if base_config.source_checkpoint:
                baselines[trial] = load(base_config.source_checkpoint)
                continue
            if not train_baseline:
                raise MissingBaseline(f"PTQ cells need an fp32 baseline for trial {trial}")
            cell = Cell('fp32', None, None, trial)
            logger.info(f"Training fp32 baseline for trial {trial}")
            results[cell] = run_cell(configure(cell), data=data, group=group, trial=trial)
            baselines[trial] = results[cell].checkpoint

    pending = [cell for cell in cells if cell not in results]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {
            cell: pool.submit(run_cell, configure(cell), data, group, cell.trial, baselines.get(cell.trial))
            for cell in pending
        }
        for cell, future in futures.items():
            results[cell] = future.result()
            logger.info(f"Cell {cell.mode} {cell.n_bits} {cell.scheme} trial {cell.trial}: "
                        f"{results[cell].best_accuracy:.4f}")

    ordered = [results[cell] for cell in cells] + [
        result for cell, result in results.items() if cell not in cells
    ]
    return MatrixTable(ordered, bits, schemes)
