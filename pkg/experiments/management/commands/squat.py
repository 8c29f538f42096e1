import logging

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from snn.data import SyntheticSpec, save_event_tensor, synth_spikes
from snn.exceptions import SquatError
from snn.model import load
from snn.quantizer import EXPONENTIAL, UNIFORM, build_exponential_grid, build_uniform_grid, normalize_scheme

from experiments.config import load_config, parse_config
from experiments.datasets import load_experiment_data
from experiments.matrix import run_matrix
from experiments.records import load_results, persist, stored_results, write_run
from experiments.reporting import report
from experiments.serializers import MODES
from experiments.training import evaluate_checkpoint, run_ptq, train

logger = logging.getLogger(__name__)

CONFIG_EXIT_CODE = 2
IO_EXIT_CODE = 11
PTQ_MODE_FOR = {'weights': 'ptq_w', 'states': 'ptq_s', 'both': 'ptq_ws'}


class Command(BaseCommand):
    help = 'Train, quantize, evaluate and report spiking networks with quantized weights and states'

    def add_arguments(self, parser):
        actions = parser.add_subparsers(dest='action', required=True)

        train_parser = actions.add_parser('train', help='Train one configuration')
        train_parser.add_argument('--config', required=True)
        train_parser.add_argument('--seed', type=int)
        self._add_output_arguments(train_parser)

        matrix = actions.add_parser('matrix', help='Run a mode x bits x scheme matrix')
        matrix.add_argument('--config', required=True)
        matrix.add_argument('--modes', nargs='+', choices=MODES, required=True)
        matrix.add_argument('--bits', nargs='+', type=int, default=[8, 4, 2])
        matrix.add_argument('--schemes', nargs='+', choices=[UNIFORM, EXPONENTIAL], default=[UNIFORM, EXPONENTIAL])
        matrix.add_argument('--trials', type=int)
        matrix.add_argument('--workers', type=int, default=1)
        matrix.add_argument('--group', default='')
        self._add_output_arguments(matrix)

        ptq = actions.add_parser('ptq', help='Post-training quantization of a trained checkpoint')
        ptq.add_argument('--from', dest='source', required=True)
        ptq.add_argument('--what', choices=sorted(PTQ_MODE_FOR), required=True)
        ptq.add_argument('--bits', type=int, required=True)
        ptq.add_argument('--scheme', default=EXPONENTIAL)
        ptq.add_argument('--config')
        self._add_output_arguments(ptq)

        evaluate = actions.add_parser('eval', help='Test accuracy of a checkpoint')
        evaluate.add_argument('--ckpt', required=True)
        evaluate.add_argument('--dataset', default='fmnist')
        evaluate.add_argument('--steps', type=int)
        evaluate.add_argument('--config')

        report_parser = actions.add_parser('report', help='Write metrics.csv and summary.csv')
        report_parser.add_argument('--in', dest='in_dir')
        report_parser.add_argument('--out', required=True)
        report_parser.add_argument('--group')

        grid = actions.add_parser('grid', help='Print the levels of a quantization grid')
        grid.add_argument('--bits', type=int, required=True)
        grid.add_argument('--scheme', default=EXPONENTIAL)
        grid.add_argument('--min', dest='u_min', type=float, required=True)
        grid.add_argument('--max', dest='u_max', type=float, required=True)
        grid.add_argument('--theta', type=float, default=1.0)
        grid.add_argument('--ratio', type=float, default=2.0)

        data = actions.add_parser('data', help='Dataset utilities')
        data_actions = data.add_subparsers(dest='data_action', required=True)
        synth = data_actions.add_parser('synth', help='Write a synthetic SQE1 event tensor')
        synth.add_argument('--out', required=True)
        synth.add_argument('--classes', type=int, default=4)
        synth.add_argument('--size', '--inputs', dest='size', type=int, default=64, help='Input features per step')
        synth.add_argument('--steps', type=int, default=25)
        synth.add_argument('--samples', type=int, default=512)
        synth.add_argument('--seed', type=int, default=0)
        synth.add_argument('--low-rate', type=float, default=0.02)
        synth.add_argument('--high-rate', type=float, default=0.6)

    def _add_output_arguments(self, parser):
        parser.add_argument('--out', help='Run output root (defaults to the config or SQUAT_OUTPUT_DIR)')
        parser.add_argument('--no-db', action='store_true', help='Skip storing run records in the database')

    def handle(self, *args, **options):
        action = options['action']
        try:
            getattr(self, f"handle_{action}")(options)
        except SquatError as exc:
            raise CommandError(f"[{exc.category}] {exc}", returncode=exc.exit_code) from exc
        except serializers.ValidationError as exc:
            raise CommandError(f"[config] {exc.detail}", returncode=CONFIG_EXIT_CODE) from exc
        except OSError as exc:
            raise CommandError(f"[io] {exc}", returncode=IO_EXIT_CODE) from exc
        except CommandError:
            raise
        except Exception:
            logger.exception(f"Unexpected failure in squat {action}")
            raise

    def _output_root(self, options, config):
        return options.get('out') or config.output_dir or settings.SQUAT_OUTPUT_DIR

    def _store(self, results, options, config):
        out_root = self._output_root(options, config)
        for result in results:
            write_run(result, out_root)
        if not options.get('no_db'):
            call_command('migrate', verbosity=0, interactive=False)
            for result in results:
                persist(result)
        return out_root

    def handle_train(self, options):
        config = load_config(options['config'], seed=options.get('seed'))
        result = train(config)
        self._store([result], options, config)
        self.stdout.write(self.style.SUCCESS(
            f"{result.record['run_id']}: best accuracy {result.best_accuracy:.4f} "
            f"at epoch {result.record['best_epoch']} ({result.record['epochs_run']} epochs run)"
        ))

    def handle_matrix(self, options):
        config = load_config(options['config'])
        trials = options.get('trials') or config.trials
        table = run_matrix(
            config, options['modes'], options['bits'], options['schemes'], trials,
            workers=options['workers'], group=options['group'],
        )
        out_root = self._store(table.results, options, config)
        report(table.results, out_root)
        self.stdout.write(table.render())

    def handle_ptq(self, options):
        data = {
            'mode': PTQ_MODE_FOR[options['what']],
            'n_bits': options['bits'],
            'scheme': options['scheme'],
            'source_checkpoint': options['source'],
        }
        if options.get('config'):
            config = load_config(options['config'], **data)
        else:
            config = parse_config(data)
        result = run_ptq(config)
        self._store([result], options, config)
        self.stdout.write(self.style.SUCCESS(f"{result.record['run_id']}: accuracy {result.best_accuracy:.4f}"))

    def handle_eval(self, options):
        overrides = {'dataset': options['dataset'], 'steps_test': options.get('steps')}
        if options.get('config'):
            config = load_config(options['config'], **overrides)
        else:
            config = parse_config({}, **overrides)
        checkpoint = load(options['ckpt'])
        accuracy = evaluate_checkpoint(checkpoint, load_experiment_data(config), config)
        self.stdout.write(f"{accuracy:.6f}")

    def handle_report(self, options):
        if options.get('in_dir'):
            results = load_results(options['in_dir'])
        else:
            call_command('migrate', verbosity=0, interactive=False)
            results = stored_results(options.get('group'))
        rows = report(results, options['out'])
        self.stdout.write(self.style.SUCCESS(f"{len(rows)} summary rows written to {options['out']}"))

    def handle_grid(self, options):
        scheme = normalize_scheme(options['scheme'])
        if scheme == UNIFORM:
            grid = build_uniform_grid(options['bits'], options['u_min'], options['u_max'])
        else:
            grid = build_exponential_grid(
                options['bits'], options['u_min'], options['u_max'], options['theta'], ratio=options['ratio'],
            )
        for level in grid.levels:
            self.stdout.write(f"{level:.9g}")

    def handle_data(self, options):
        spec = SyntheticSpec(
            num_classes=options['classes'],
            input_size=options['size'],
            num_steps=options['steps'],
            num_samples=options['samples'],
            seed=options['seed'],
            low_rate=options['low_rate'],
            high_rate=options['high_rate'],
        )
        path = save_event_tensor(synth_spikes(spec), options['out'])
        self.stdout.write(self.style.SUCCESS(f"Wrote {spec.num_samples} sequences to {path}"))
