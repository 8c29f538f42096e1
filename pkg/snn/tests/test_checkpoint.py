import struct
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from snn.exceptions import CheckpointError, MagicMismatch, TruncatedFile, VersionMismatch
from snn.model import Checkpoint, StateQuantSpec, WeightQuantSpec, build_network, build_preset, load, save
from snn.model.checkpoint import dumps, loads
from snn.model.ptq import calibrate_states
from snn.data import direct_encode


def quantized_checkpoint():
    spec = build_preset('fmnist', {'input_shape': (1, 16, 16), 'num_classes': 3}, seed=4).with_quant(
        weight_quant=WeightQuantSpec(4), state_quant=StateQuantSpec(3, 'exponential'),
    )
    network = build_network(spec)
    images = np.random.default_rng(0).random((6, 1, 16, 16), dtype=np.float32)
    network(direct_encode(images, 3).inputs)
    calibrate_states(network, [direct_encode(images, 3)])
    return Checkpoint.from_network(network, epoch=7, seed=4)


class CheckpointRoundTripTests(SimpleTestCase):
    def setUp(self):
        self.checkpoint = quantized_checkpoint()
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'model.sqt'

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_load_save_is_byte_identical(self):
        save(self.checkpoint, self.path)
        first = self.path.read_bytes()
        save(load(self.path), self.path)
        self.assertEqual(self.path.read_bytes(), first)

    def test_tensors_and_grids_survive(self):
        save(self.checkpoint, self.path)
        loaded = load(self.path)
        self.assertEqual(list(loaded.tensors), list(self.checkpoint.tensors))
        for name, array in self.checkpoint.tensors.items():
            np.testing.assert_array_equal(loaded.tensors[name], array)
        self.assertEqual(loaded.grids(), self.checkpoint.grids())
        self.assertEqual(len(loaded.grids()), 3)
        self.assertEqual(loaded.meta, {'epoch': 7, 'seed': 4})

    def test_restored_network_keeps_frozen_grids(self):
        network = loads(dumps(self.checkpoint)).to_network()
        grids = {name: quantizer.grid for name, quantizer in network.quantizers().items()}
        self.assertEqual(grids, self.checkpoint.grids())
        self.assertEqual(network.spec.to_dict(), self.checkpoint.spec.to_dict())

    def test_batchnorm_buffers_are_kept(self):
        network = loads(dumps(self.checkpoint)).to_network()
        np.testing.assert_array_equal(network.layers[1].stats.mean, self.checkpoint.tensors['1.batchnorm.running_mean'])
        self.assertEqual(network.layers[1].stats.tracked, 3)


class CorruptCheckpointTests(SimpleTestCase):
    def setUp(self):
        self.payload = dumps(Checkpoint.from_network(build_network(build_preset('tiny', {'hidden': 4}))))

    def test_wrong_magic(self):
        with self.assertRaises(MagicMismatch):
            loads(b'XXXX' + self.payload[4:])

    def test_wrong_version(self):
        with self.assertRaises(VersionMismatch):
            loads(self.payload[:4] + struct.pack('<I', 2) + self.payload[8:])

    def test_truncated(self):
        with self.assertRaises(TruncatedFile):
            loads(self.payload[:-10])

    def test_trailing_bytes(self):
        with self.assertRaises(CheckpointError):
            loads(self.payload + b'\0')

    def test_missing_file(self):
        with self.assertRaises(CheckpointError):
            load('/nonexistent/model.sqt')
