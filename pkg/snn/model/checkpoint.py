"""Binary checkpoints (``SQT1``).

Layout, all integers little-endian::

    b"SQT1" | u32 version
    u32 length | UTF-8 JSON {"meta": ..., "spec": ...}
    u32 tensor count, then per tensor:
        u32 length | UTF-8 name | u8 rank | u32 dims[rank] | f32 payload
    u32 quant entry count, then per entry:
        u32 length | UTF-8 name | u32 length | UTF-8 JSON header
        u32 level count | f64 levels

State-grid levels are stored explicitly so a reload reproduces them bit for bit.
"""
import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import CheckpointError, MagicMismatch, TruncatedFile, VersionMismatch
from ..quantizer import QuantGrid
from .spec import ModelSpec, build_network

logger = logging.getLogger(__name__)

MAGIC = b'SQT1'
VERSION = 1


@dataclass
class Checkpoint:
    spec: ModelSpec
    tensors: dict
    quant: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    version: int = VERSION

    @classmethod
    def from_network(cls, network, **meta):
        tensors = {name: np.array(array, dtype=np.float32) for name, array in network.state_dict().items()}
        quant = {}
        for name, quantizer in network.quantizers().items():
            grid = quantizer.grid
            if grid is None:
                quant[name] = {'kind': 'state', 'frozen': False}
            else:
                u_min, u_max = quantizer.observer.bounds
                quant[name] = {'kind': 'state', 'frozen': True, 'bounds': [u_min, u_max], 'grid': grid}
        for name, scale in network.weight_scales().items():
            quant[name] = {'kind': 'weight', 'scale': scale}
        return cls(network.spec, tensors, quant, meta)

    def to_network(self):
        network = build_network(self.spec)
        network.load_state_dict(self.tensors)
        quantizers = network.quantizers()
        for name, entry in self.quant.items():
            if entry['kind'] != 'state' or not entry['frozen']:
                continue
            if name not in quantizers:
                raise CheckpointError(f"grid stored for {name}, which has no state quantizer")
            quantizers[name].restore(*entry['bounds'], entry['grid'])
        return network

    def parameter_digest(self):
        """SHA-256 over every stored tensor, in order."""
        digest = hashlib.sha256()
        for name, array in self.tensors.items():
            digest.update(name.encode('utf-8'))
            digest.update(np.ascontiguousarray(array, dtype='<f4').tobytes())
        return digest.hexdigest()

    def grids(self):
        return {
            name: entry['grid'] for name, entry in self.quant.items()
            if entry['kind'] == 'state' and entry['frozen']
        }


def _pack_text(text):
    raw = text.encode('utf-8')
    return struct.pack('<I', len(raw)) + raw


def _quant_header(entry):
    header = {key: value for key, value in entry.items() if key != 'grid'}
    grid = entry.get('grid')
    if grid is not None:
        header.update({
            'scheme': grid.scheme,
            'n_bits': grid.n_bits,
            'u_min': grid.u_min,
            'u_max': grid.u_max,
            'theta': grid.theta,
            'ratio': grid.ratio,
        })
    return header


def dumps(checkpoint):
    chunks = [MAGIC, struct.pack('<I', checkpoint.version)]
    blob = json.dumps({'meta': checkpoint.meta, 'spec': checkpoint.spec.to_dict()}, sort_keys=True)
    chunks.append(_pack_text(blob))
    chunks.append(struct.pack('<I', len(checkpoint.tensors)))
    for name, array in checkpoint.tensors.items():
        array = np.asarray(array)
        chunks.append(_pack_text(name))
        chunks.append(struct.pack('<B', array.ndim))
        chunks.append(struct.pack(f'<{array.ndim}I', *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype='<f4').tobytes())
    chunks.append(struct.pack('<I', len(checkpoint.quant)))
    for name, entry in checkpoint.quant.items():
        chunks.append(_pack_text(name))
        chunks.append(_pack_text(json.dumps(_quant_header(entry), sort_keys=True)))
        grid = entry.get('grid')
        levels = np.empty(0) if grid is None else grid.levels
        chunks.append(struct.pack('<I', len(levels)))
        chunks.append(np.ascontiguousarray(levels, dtype='<f8').tobytes())
    return b''.join(chunks)


class _Reader:
    def __init__(self, buffer):
        self.buffer = buffer
        self.offset = 0

    def take(self, count):
        end = self.offset + count
        if end > len(self.buffer):
            raise TruncatedFile(f"checkpoint truncated at byte {len(self.buffer)}, needed {end}")
        chunk = self.buffer[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self):
        (length,) = self.unpack('<I')
        try:
            return self.take(length).decode('utf-8')
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"corrupt text field at byte {self.offset}") from exc


def loads(buffer):
    reader = _Reader(bytes(buffer))
    magic = reader.take(len(MAGIC))
    if magic != MAGIC:
        raise MagicMismatch(f"not a checkpoint: magic {magic!r}, expected {MAGIC!r}")
    (version,) = reader.unpack('<I')
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, this reader supports {VERSION}")
    try:
        header = json.loads(reader.text())
        spec = ModelSpec.from_dict(header['spec'])
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"corrupt spec blob: {exc}") from exc

    tensors = {}
    (count,) = reader.unpack('<I')
    for _ in range(count):
        name = reader.text()
        (rank,) = reader.unpack('<B')
        dims = reader.unpack(f'<{rank}I')
        size = int(np.prod(dims)) if rank else 1
        payload = reader.take(4 * size)
        tensors[name] = np.frombuffer(payload, dtype='<f4').astype(np.float32).reshape(dims)

    quant = {}
    (count,) = reader.unpack('<I')
    for _ in range(count):
        name = reader.text()
        entry = json.loads(reader.text())
        (level_count,) = reader.unpack('<I')
        levels = np.frombuffer(reader.take(8 * level_count), dtype='<f8').astype(np.float64)
        if level_count:
            entry['grid'] = QuantGrid(
                levels, entry.pop('n_bits'), entry.pop('scheme'), entry.pop('u_min'), entry.pop('u_max'),
                theta=entry.pop('theta'), ratio=entry.pop('ratio'),
            )
        quant[name] = entry
    if reader.offset != len(reader.buffer):
        raise CheckpointError(f"{len(reader.buffer) - reader.offset} trailing bytes after checkpoint")
    return Checkpoint(spec, tensors, quant, header['meta'], version)


def save(checkpoint, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(checkpoint))
    logger.info(f"Checkpoint written to {path}")
    return path


def load(path):
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    return loads(path.read_bytes())
