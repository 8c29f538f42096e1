"""Plot-ready CSV output: per-epoch metrics and per-cell summaries."""
import csv
import logging
from collections import OrderedDict
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from snn.exceptions import NoRecords

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ('run_id', 'epoch', 'split', 'loss', 'accuracy', 'lr')
SUMMARY_COLUMNS = ('mode', 'bits', 'scheme', 'mean_acc', 'std_acc', 'trials')
MODE_ORDER = ('fp32', 'qat_w', 'squat_s', 'qat_squat', 'ptq_w', 'ptq_s', 'ptq_ws')


@dataclass(frozen=True)
class SummaryRow:
    mode: str
    bits: Optional[int]
    scheme: Optional[str]
    mean_acc: float
    std_acc: float
    trials: int


def summarize(results):
    """Mean and population standard deviation of best accuracy per cell."""
    groups = OrderedDict()
    for result in results:
        record = result.record
        groups.setdefault((record['mode'], record['n_bits'], record['scheme']), []).append(record['best_accuracy'])
    rows = [
        SummaryRow(mode, n_bits, scheme, float(np.mean(values)), float(np.std(values)), len(values))
        for (mode, n_bits, scheme), values in groups.items()
    ]
    return sorted(rows, key=lambda row: (MODE_ORDER.index(row.mode), row.bits or 0, row.scheme or ''))


def _cell(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(results, path):
    path = Path(path)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(METRIC_COLUMNS)
        for result in results:
            for metric in result.metrics:
                writer.writerow([_cell(result.record['run_id'])] + [_cell(metric[key]) for key in METRIC_COLUMNS[1:]])
    return path


def write_summary_csv(rows, path):
    path = Path(path)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([_cell(value) for value in astuple(row)])
    return path


def _optional(text, cast):
    return None if text == '' else cast(text)


def read_summary(path):
    with Path(path).open(newline='') as handle:
        reader = csv.DictReader(handle)
        return [
            SummaryRow(
                mode=line['mode'],
                bits=_optional(line['bits'], int),
                scheme=_optional(line['scheme'], str),
                mean_acc=float(line['mean_acc']),
                std_acc=float(line['std_acc']),
                trials=int(line['trials']),
            )
            for line in reader
        ]


def report(results, out_dir):
    """Write ``metrics.csv`` and ``summary.csv`` into ``out_dir``; returns the summary rows."""
    results = list(results)
    if not results:
        raise NoRecords("no run records to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = summarize(results)
    write_metrics_csv(results, out_dir / 'metrics.csv')
    write_summary_csv(rows, out_dir / 'summary.csv')
    logger.info(f"Wrote {len(rows)} summary rows for {len(results)} runs to {out_dir}")
    return rows
