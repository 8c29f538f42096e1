import csv
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from snn.exceptions import NoRecords

from experiments.reporting import METRIC_COLUMNS, SUMMARY_COLUMNS, SummaryRow, read_summary, report, summarize
from experiments.training import RunResult


def result(run_id, mode, n_bits, scheme, accuracy, trial=0):
    record = {'run_id': run_id, 'mode': mode, 'n_bits': n_bits, 'scheme': scheme, 'best_accuracy': accuracy,
              'trial': trial}
    metrics = [
        {'epoch': 1, 'split': 'train', 'loss': 0.25, 'accuracy': accuracy, 'lr': 5e-4},
        {'epoch': 1, 'split': 'test', 'loss': 0.1 + 0.2, 'accuracy': accuracy, 'lr': 5e-4},
    ]
    return RunResult(record, metrics)


class SummarizeTests(SimpleTestCase):
    def test_single_run_has_zero_spread(self):
        rows = summarize([result('a', 'qat_w', 4, None, 0.5)])
        self.assertEqual(rows, [SummaryRow('qat_w', 4, None, 0.5, 0.0, 1)])

    def test_two_trials(self):
        rows = summarize([
            result('a', 'qat_squat', 2, 'exponential', 0.6, 0),
            result('b', 'qat_squat', 2, 'exponential', 0.8, 1),
        ])
        self.assertEqual(len(rows), 1)
        self.assertAlmostEqual(rows[0].mean_acc, 0.7)
        self.assertAlmostEqual(rows[0].std_acc, 0.1)
        self.assertEqual(rows[0].trials, 2)

    def test_rows_ordered_by_mode_then_bits(self):
        rows = summarize([
            result('a', 'ptq_ws', 2, 'uniform', 0.1),
            result('b', 'qat_w', 8, None, 0.9),
            result('c', 'fp32', None, None, 0.95),
            result('d', 'qat_w', 2, None, 0.5),
        ])
        self.assertEqual([(row.mode, row.bits) for row in rows],
                         [('fp32', None), ('qat_w', 2), ('qat_w', 8), ('ptq_ws', 2)])


class ReportTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name) / 'report'
        self.results = [
            result('fp', 'fp32', None, None, 0.875),
            result('u2a', 'qat_squat', 2, 'uniform', 1 / 3, 0),
            result('u2b', 'qat_squat', 2, 'uniform', 0.7, 1),
        ]

    def tearDown(self):
        self.tmp.cleanup()

    def test_summary_reparses_exactly(self):
        rows = report(self.results, self.out)
        self.assertEqual(read_summary(self.out / 'summary.csv'), rows)

    def test_column_order(self):
        report(self.results, self.out)
        with (self.out / 'metrics.csv').open(newline='') as handle:
            lines = list(csv.reader(handle))
        self.assertEqual(tuple(lines[0]), METRIC_COLUMNS)
        self.assertEqual(len(lines), 1 + 6)
        self.assertEqual(lines[2], ['fp', '1', 'test', repr(0.1 + 0.2), '0.875', '0.0005'])
        with (self.out / 'summary.csv').open(newline='') as handle:
            self.assertEqual(tuple(next(csv.reader(handle))), SUMMARY_COLUMNS)

    def test_missing_values_are_blank(self):
        report(self.results, self.out)
        with (self.out / 'summary.csv').open(newline='') as handle:
            first = next(csv.DictReader(handle))
        self.assertEqual((first['mode'], first['bits'], first['scheme']), ('fp32', '', ''))

    def test_no_records(self):
        with self.assertRaises(NoRecords):
            report([], self.out)
