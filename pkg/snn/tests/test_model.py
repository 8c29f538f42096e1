import numpy as np
from django.test import SimpleTestCase

from snn.data import direct_encode
from snn.exceptions import DatasetError, GridError, SpecError
from snn.losses import ce_spike_count_loss
from snn.model import (
    Checkpoint,
    StateQuantSpec,
    WeightQuantSpec,
    build_network,
    build_preset,
    fake_quant_weights,
    infer_shapes,
    ptq_convert,
    quantize_weights,
    weight_scale,
)
from snn.optim import Adam
from snn.tensor import Tensor, no_grad


def small_spec(seed=0, **quant):
    spec = build_preset('tiny', {'input_shape': (1, 8, 8), 'hidden': 16, 'num_classes': 4}, seed=seed)
    return spec.with_quant(**quant) if quant else spec


def encoded(count=20, steps=5, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.uniform(0.0, 1.0, (count, 1, 8, 8)).astype(np.float32)
    return direct_encode(images, steps, rng.integers(0, 4, count))


class PresetTests(SimpleTestCase):
    def test_fmnist_layout(self):
        spec = build_preset('fmnist')
        kinds = [layer['kind'] for layer in spec.layers]
        self.assertEqual(kinds, ['conv', 'batchnorm', 'maxpool', 'lif', 'conv', 'batchnorm', 'maxpool', 'lif',
                                 'flatten', 'dense', 'lif'])
        self.assertEqual(spec.layers[9]['in_features'], 1024)
        self.assertEqual(spec.num_classes, 10)

    def test_shd_layout(self):
        spec = build_preset('shd')
        dense = [layer for layer in spec.layers if layer['kind'] == 'dense']
        self.assertEqual([(d['in_features'], d['out_features']) for d in dense], [(700, 1000), (1000, 20)])
        self.assertEqual(sum(layer['kind'] == 'dropout' for layer in spec.layers), 2)
        self.assertEqual(sum(layer['kind'] == 'batchnorm' for layer in spec.layers), 2)

    def test_dvs_flattens_to_8800(self):
        spec = build_preset('dvs')
        dense = [layer for layer in spec.layers if layer['kind'] == 'dense']
        self.assertEqual((dense[0]['in_features'], dense[0]['out_features']), (8800, 11))

    def test_tiny_layout(self):
        spec = build_preset('tiny')
        dense = [layer for layer in spec.layers if layer['kind'] == 'dense']
        self.assertEqual([(d['in_features'], d['out_features']) for d in dense], [(784, 128), (128, 10)])

    def test_overrides(self):
        spec = build_preset('tiny', {'beta': 0.5, 'theta': 0.75, 'hidden': 32})
        lif = [layer for layer in spec.layers if layer['kind'] == 'lif']
        self.assertTrue(all(layer['beta'] == 0.5 and layer['theta'] == 0.75 for layer in lif))
        self.assertEqual(spec.layers[1]['out_features'], 32)

    def test_unknown_preset_and_override(self):
        with self.assertRaises(SpecError):
            build_preset('resnet')
        with self.assertRaises(SpecError):
            build_preset('tiny', {'betta': 0.5})

    def test_composition_break(self):
        with self.assertRaises(SpecError):
            infer_shapes((10,), [{'kind': 'dense', 'in_features': 12, 'out_features': 3}])

    def test_every_preset_composes_at_one_step(self):
        for name in ('tiny', 'fmnist', 'shd', 'dvs'):
            with self.subTest(preset=name):
                spec = build_preset(name)
                network = build_network(spec)
                inputs = Tensor(np.random.default_rng(0).random((1, 1) + spec.input_shape, dtype=np.float32))
                with no_grad():
                    out = network(inputs)
                self.assertEqual(out.shape, (1, 1, spec.num_classes))

    def test_spec_round_trips_through_dict(self):
        spec = small_spec(weight_quant=WeightQuantSpec(4), state_quant=StateQuantSpec(2, 'uniform'))
        again = type(spec).from_dict(spec.to_dict())
        self.assertEqual(again.to_dict(), spec.to_dict())

    def test_same_seed_same_weights(self):
        first = build_network(small_spec(seed=3)).state_dict()
        second = build_network(small_spec(seed=3)).state_dict()
        for name in first:
            np.testing.assert_array_equal(first[name], second[name])


class FakeQuantTests(SimpleTestCase):
    def test_eight_bit_endpoints(self):
        w = np.array([-1.0, 0.0, 1.0], np.float32)
        out = fake_quant_weights(Tensor(w), 8).data
        self.assertTrue(np.all(np.abs(out - w) <= 1 / 254))

    def test_two_bit_three_values(self):
        w = np.random.default_rng(0).standard_normal(100).astype(np.float32)
        out = fake_quant_weights(Tensor(w), 2).data
        scale = weight_scale(w, 2)
        np.testing.assert_array_equal(np.unique(out), np.array([-scale, 0.0, scale], np.float32))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for n_bits in (2, 4, 8):
            w = rng.standard_normal(2000).astype(np.float32)
            out, scale = quantize_weights(w, n_bits)
            qmax = 2 ** (n_bits - 1) - 1
            candidates = np.arange(-qmax, qmax + 1) * scale
            nearest = candidates[np.abs(w[:, None].astype(np.float64) - candidates[None]).argmin(axis=1)]
            np.testing.assert_array_equal(out, nearest.astype(np.float32))

    def test_idempotent(self):
        w = Tensor(np.random.default_rng(2).standard_normal((8, 8)).astype(np.float32))
        for n_bits in (2, 4, 8):
            once = fake_quant_weights(w, n_bits)
            np.testing.assert_array_equal(fake_quant_weights(once, n_bits).data, once.data)

    def test_codes_are_exact_integers(self):
        w = np.random.default_rng(3).standard_normal(500).astype(np.float32)
        out, scale = quantize_weights(w, 8)
        codes = out.astype(np.float64) / scale
        np.testing.assert_array_equal(codes, np.round(codes))

    def test_zero_tensor(self):
        np.testing.assert_array_equal(fake_quant_weights(Tensor(np.zeros(4, np.float32)), 4).data, 0.0)

    def test_full_precision_guard(self):
        w = np.random.default_rng(4).standard_normal(5).astype(np.float32)
        np.testing.assert_array_equal(quantize_weights(w, 32)[0], w)

    def test_one_bit_rejected(self):
        with self.assertRaises(GridError):
            quantize_weights(np.ones(3), 1)

    def test_training_step_keeps_code_range(self):
        network = build_network(small_spec(weight_quant=WeightQuantSpec(2)))
        batch = encoded()
        before = network.layers[1].weight.data.copy()
        optimizer = Adam(network.parameters(), lr=1e-2)
        ce_spike_count_loss(network(batch.inputs), batch.labels).backward()
        optimizer.step()
        after = network.layers[1].weight.data
        self.assertFalse(np.array_equal(before, after))
        quantized = network.layers[1].effective_weight().data
        self.assertLessEqual(len(np.unique(quantized)), 3)
        codes = quantized / weight_scale(after, 2)
        np.testing.assert_array_equal(codes, np.round(codes))


class Recorder:
    def __init__(self, quantizer):
        self.quantizer = quantizer
        self.outputs = []

    def __call__(self, u):
        out = self.quantizer(u)
        self.outputs.append(out.data.copy())
        return out


class PtqTests(SimpleTestCase):
    def setUp(self):
        self.source = Checkpoint.from_network(build_network(small_spec()), epoch=0, seed=0)
        self.calib = [encoded(16, seed=1), encoded(16, seed=2)]

    def test_full_precision_bits_leave_parameters_unchanged(self):
        converted = ptq_convert(self.source, 'weights', 32, 'uniform', [])
        self.assertEqual(converted.parameter_digest(), self.source.parameter_digest())

    def test_states_only_never_touches_parameters(self):
        converted = ptq_convert(self.source, 'states', 4, 'exponential', self.calib)
        self.assertEqual(converted.parameter_digest(), self.source.parameter_digest())
        self.assertEqual(len(converted.grids()), 2)

    def test_both_puts_weights_and_states_on_grids(self):
        converted = ptq_convert(self.source, 'both', 4, 'exponential', self.calib)
        for name, array in converted.tensors.items():
            if name.endswith('dense.weight'):
                np.testing.assert_array_equal(quantize_weights(array, 4)[0], array)
        network = converted.to_network().eval()
        recorders = {}
        for layer in network.layers:
            if getattr(layer, 'quantizer', None) is not None:
                recorders[layer] = Recorder(layer.quantizer)
                layer.config.state_quant = recorders[layer]
        with no_grad():
            network(encoded(10, seed=3).inputs)
        for layer, recorder in recorders.items():
            levels = recorder.quantizer.grid.levels.astype(np.float32)
            for output in recorder.outputs:
                self.assertTrue(np.all(np.isin(output, levels)))

    def test_empty_calibration_set(self):
        with self.assertRaises(DatasetError):
            ptq_convert(self.source, 'states', 4, 'uniform', [])

    def test_unknown_target(self):
        with self.assertRaises(SpecError):
            ptq_convert(self.source, 'biases', 4, 'uniform', self.calib)

    def test_qat_and_ptq_inference_agree(self):
        converted = ptq_convert(self.source, 'both', 4, 'exponential', self.calib)
        qat_spec = self.source.spec.with_quant(
            weight_quant=WeightQuantSpec(4), state_quant=StateQuantSpec(4, 'exponential')
        )
        qat = build_network(qat_spec)
        qat.load_state_dict(converted.tensors)
        for name, quantizer in qat.quantizers().items():
            quantizer.freeze(*converted.quant[name]['bounds'])
        ptq = converted.to_network()
        inputs = encoded(100, seed=4).inputs
        with no_grad():
            qat_spikes = qat.eval()(inputs).data
            ptq_spikes = ptq.eval()(inputs).data
        np.testing.assert_array_equal(qat_spikes, ptq_spikes)
