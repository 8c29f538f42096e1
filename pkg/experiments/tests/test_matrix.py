import numpy as np
from django.test import SimpleTestCase

from snn.exceptions import MissingBaseline, SpecError

from experiments.matrix import TABLE_ROWS, Cell, plan_cells, run_matrix

from .utils import synthetic_config, synthetic_data

ALL_MODES = ['fp32', 'qat_w', 'squat_s', 'qat_squat', 'ptq_w', 'ptq_s', 'ptq_ws']


class PlanCellsTests(SimpleTestCase):
    def test_single_mode_three_bit_widths(self):
        cells = plan_cells(['qat_w'], [8, 4, 2], ['uniform', 'exponential'], 1)
        self.assertEqual(cells, [Cell('qat_w', 8, None, 0), Cell('qat_w', 4, None, 0), Cell('qat_w', 2, None, 0)])

    def test_full_matrix_cardinality(self):
        cells = plan_cells(ALL_MODES, [8, 4, 2], ['uniform', 'exponential'], 3)
        # fp32 once, scheme-free modes per bit width, the rest per bit width and scheme
        self.assertEqual(len(cells), 3 * (1 + 3 + 3 + 4 * 6))

    def test_invalid_requests(self):
        with self.assertRaises(SpecError):
            plan_cells(['qat_x'], [8], ['uniform'], 1)
        with self.assertRaises(SpecError):
            plan_cells(['qat_w'], [8], ['uniform'], 0)
        with self.assertRaises(SpecError):
            plan_cells(['squat_s'], [8], [], 1)


class RunMatrixTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.config = synthetic_config(epochs=1)
        cls.data = synthetic_data(cls.config)

    def test_one_row(self):
        table = run_matrix(self.config, ['qat_w'], [8, 4, 2], ['exponential'], 1, data=self.data)
        self.assertEqual(len(table.results), 3)
        rows = table.rows('exponential')
        self.assertEqual([label for label, _ in rows], ['QAT Weights'])
        self.assertTrue(all(value is not None for value in rows[0][1]))

    def test_paired_seeds(self):
        table = run_matrix(self.config, ['fp32', 'qat_w'], [4], ['uniform'], 2, data=self.data)
        seeds = {(r.record['mode'], r.record['trial']): r.record['seed'] for r in table.results}
        self.assertEqual(seeds, {('fp32', 0): 0, ('fp32', 1): 1, ('qat_w', 0): 0, ('qat_w', 1): 1})

    def test_mean_over_trials(self):
        table = run_matrix(self.config, ['squat_s'], [2], ['uniform'], 2, data=self.data)
        accuracies = [r.best_accuracy for r in table.results]
        self.assertEqual(table.mean('squat_s', 2, 'uniform'), float(np.mean(accuracies)))

    def test_ptq_without_baseline(self):
        with self.assertRaises(MissingBaseline):
            run_matrix(self.config, ['ptq_w'], [8], ['uniform'], 1, data=self.data, train_baseline=False)

    def test_ptq_trains_baseline_first(self):
        table = run_matrix(self.config, ['ptq_ws'], [4], ['exponential'], 1, data=self.data)
        modes = [r.record['mode'] for r in table.results]
        self.assertEqual(sorted(modes), ['fp32', 'ptq_ws'])

    def test_given_baseline_is_used(self):
        baseline = run_matrix(self.config, ['fp32'], [8], ['uniform'], 1, data=self.data).results[0].checkpoint
        table = run_matrix(self.config, ['ptq_s'], [8], ['uniform'], 1, data=self.data,
                           baselines={0: baseline}, train_baseline=False)
        self.assertEqual([r.record['mode'] for r in table.results], ['ptq_s'])
        self.assertEqual(table.results[0].checkpoint.parameter_digest(), baseline.parameter_digest())

    def test_workers_do_not_change_results(self):
        serial = run_matrix(self.config, ['qat_squat'], [4, 2], ['exponential'], 1, data=self.data)
        threaded = run_matrix(self.config, ['qat_squat'], [4, 2], ['exponential'], 1, data=self.data, workers=2)
        self.assertEqual([r.metrics for r in serial.results], [r.metrics for r in threaded.results])

    def test_full_matrix_table_layout(self):
        table = run_matrix(self.config, ALL_MODES, [8, 4, 2], ['uniform', 'exponential'], 1, data=self.data)
        for scheme in ('uniform', 'exponential'):
            rows = table.rows(scheme)
            self.assertEqual(len(rows), len(TABLE_ROWS))
            self.assertEqual([label for label, _ in rows], [
                'QAT States', 'QAT Weights', 'QAT Weights and States',
                'PTQ States', 'PTQ Weights', 'PTQ Weights and States',
            ])
            self.assertTrue(all(len(means) == 3 for _, means in rows))
        self.assertEqual(table.rows('uniform')[1], table.rows('exponential')[1])
        self.assertIn('Full Precision', table.render())
