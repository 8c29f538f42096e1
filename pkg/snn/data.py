"""Dataset ingestion and temporal encoding.

* IDX image/label files (optionally gzip-compressed), scaled to ``[0, 1]``.
* Direct encoding: the same input current replayed at every time step.
* Synthetic Bernoulli spike trains with class-specific rate profiles.
* ``SQE1`` pre-binned event tensors, little-endian::

      b"SQE1" | u32 version | u32 T | u32 B | u32 rank | u32 dims[rank]
      f32 payload[T * B * prod(dims)] | i32 labels[B]
"""
import gzip
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import (
    EventFormatError,
    IdxCountMismatch,
    IdxMagicError,
    MissingDataset,
    ShapeError,
    SpecError,
    TruncatedPayload,
)
from .tensor import Tensor

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
EVENT_MAGIC = b'SQE1'
EVENT_VERSION = 1


@dataclass
class EncodedBatch:
    inputs: Tensor
    labels: np.ndarray

    def __post_init__(self):
        if not isinstance(self.inputs, Tensor):
            self.inputs = Tensor(self.inputs)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim < 2 or self.inputs.shape[0] < 1:
            raise ShapeError(f"encoded inputs need shape [T >= 1, B, ...], got {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[1],):
            raise ShapeError(f"{self.labels.shape} labels for a batch of {self.inputs.shape[1]}")

    @property
    def num_steps(self):
        return self.inputs.shape[0]

    def __len__(self):
        return self.inputs.shape[1]


def _read(path):
    path = Path(path)
    if not path.exists():
        gz = path.with_name(path.name + '.gz')
        if not gz.exists():
            raise MissingDataset(f"dataset file {path} not found")
        path = gz
    if path.suffix == '.gz':
        with gzip.open(path, 'rb') as handle:
            return handle.read()
    return path.read_bytes()


def _idx_header(buffer, magic, dims, what):
    size = 4 * (1 + dims)
    if len(buffer) < size:
        raise TruncatedPayload(f"{what} file shorter than its {size}-byte header")
    fields = struct.unpack(f'>{1 + dims}I', buffer[:size])
    if fields[0] != magic:
        raise IdxMagicError(f"{what} file has magic {fields[0]:#010x}, expected {magic:#010x}")
    return fields[1:], buffer[size:]


@dataclass
class RawDataset:
    images: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)


def load_idx(images_path, labels_path):
    """Read an IDX image/label pair; pixels come back as float32 in [0, 1]."""
    (count, rows, cols), pixels = _idx_header(_read(images_path), IDX_IMAGES_MAGIC, 3, 'image')
    (label_count,), label_bytes = _idx_header(_read(labels_path), IDX_LABELS_MAGIC, 1, 'label')
    if count != label_count:
        raise IdxCountMismatch(f"{count} images but {label_count} labels")
    if len(pixels) != count * rows * cols:
        raise TruncatedPayload(f"image payload has {len(pixels)} bytes, expected {count * rows * cols}")
    if len(label_bytes) != label_count:
        raise TruncatedPayload(f"label payload has {len(label_bytes)} bytes, expected {label_count}")
    images = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows, cols)
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    logger.debug(f"Loaded {count} IDX images of {rows}x{cols} from {images_path}")
    return RawDataset(images.astype(np.float32) / 255.0, labels)


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 images ``[N, H, W]`` and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(images_path).write_bytes(struct.pack('>4I', IDX_IMAGES_MAGIC, *images.shape) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack('>2I', IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def direct_encode(images, num_steps, labels=None):
    """Replay ``images`` as constant input current for ``num_steps`` steps."""
    if num_steps < 1:
        raise ShapeError(f"need at least one time step, got {num_steps}")
    images = np.asarray(images, dtype=np.float32)
    if labels is None:
        labels = np.zeros(len(images), dtype=np.int64)
    replayed = np.broadcast_to(images[None], (num_steps,) + images.shape)
    return EncodedBatch(Tensor(replayed), labels)


@dataclass(frozen=True)
class SyntheticSpec:
    """Class-separable Bernoulli spike trains.

    Unless ``rates`` (``[num_classes, input_size]``) is given, class ``k``
    fires at ``high_rate`` on its own contiguous band of input channels and
    at ``low_rate`` everywhere else.
    """

    num_classes: int
    input_size: int
    num_steps: int
    num_samples: int = 1000
    seed: int = 0
    low_rate: float = 0.02
    high_rate: float = 0.6
    rates: Optional[tuple] = None

    def rate_profile(self):
        if self.rates is not None:
            profile = np.asarray(self.rates, dtype=np.float64)
            if profile.shape != (self.num_classes, self.input_size):
                raise SpecError(f"rate profile shape {profile.shape}, expected "
                                f"({self.num_classes}, {self.input_size})")
        else:
            profile = np.full((self.num_classes, self.input_size), self.low_rate)
            band = max(1, self.input_size // self.num_classes)
            for k in range(self.num_classes):
                start = (k * band) % self.input_size
                profile[k, start:start + band] = self.high_rate
        if profile.min() < 0.0 or profile.max() > 1.0:
            raise SpecError("firing rates must lie in [0, 1]")
        return profile


def synth_spikes(spec):
    if spec.num_steps < 1 or spec.num_samples < 1 or spec.num_classes < 1:
        raise SpecError("synthetic data needs at least one step, sample and class")
    profile = spec.rate_profile()
    rng = np.random.default_rng(spec.seed)
    labels = rng.permutation(np.arange(spec.num_samples) % spec.num_classes)
    rates = profile[labels]
    draws = rng.random((spec.num_steps, spec.num_samples, spec.input_size))
    return EncodedBatch(Tensor((draws < rates[None]).astype(np.float32)), labels)


def save_event_tensor(batch, path):
    inputs = np.ascontiguousarray(batch.inputs.data, dtype='<f4')
    steps, size = inputs.shape[:2]
    feature_shape = inputs.shape[2:]
    header = EVENT_MAGIC + struct.pack(
        f'<4I{len(feature_shape)}I', EVENT_VERSION, steps, size, len(feature_shape), *feature_shape
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + inputs.tobytes() + np.asarray(batch.labels, dtype='<i4').tobytes())
    return path


def load_event_tensor(path):
    path = Path(path)
    if not path.exists():
        raise MissingDataset(f"event tensor {path} not found")
    buffer = path.read_bytes()
    if buffer[:4] != EVENT_MAGIC:
        raise EventFormatError(f"bad event tensor magic {buffer[:4]!r}")
    if len(buffer) < 20:
        raise TruncatedPayload("event tensor header is truncated")
    version, steps, size, rank = struct.unpack('<4I', buffer[4:20])
    if version != EVENT_VERSION:
        raise EventFormatError(f"event tensor version {version}, expected {EVENT_VERSION}")
    offset = 20 + 4 * rank
    if len(buffer) < offset:
        raise TruncatedPayload("event tensor header is truncated")
    dims = struct.unpack(f'<{rank}I', buffer[20:offset])
    count = steps * size * math.prod(dims)
    expected = offset + 4 * count + 4 * size
    if len(buffer) != expected:
        raise TruncatedPayload(f"event tensor has {len(buffer)} bytes, expected {expected}")
    inputs = np.frombuffer(buffer, dtype='<f4', count=count, offset=offset)
    labels = np.frombuffer(buffer, dtype='<i4', count=size, offset=offset + 4 * count)
    return EncodedBatch(
        Tensor(inputs.astype(np.float32).reshape((steps, size) + dims)),
        labels.astype(np.int64),
    )


class _Dataset:
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    def num_batches(self, batch_size):
        return math.ceil(len(self) / batch_size)

    def batches(self, batch_size, num_steps, rng=None):
        """Yield ``EncodedBatch`` minibatches, shuffled when ``rng`` is given.

        A fresh permutation is drawn on every call, so one call per epoch
        gives a new order per epoch.
        """
        if batch_size < 1:
            raise SpecError(f"batch size must be positive, got {batch_size}")
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            yield self._batch(order[start:start + batch_size], num_steps)


class StaticDataset(_Dataset):
    """Static samples ``[N, ...]``, direct-encoded per batch."""

    def __init__(self, features, labels):
        self.features = np.asarray(features, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        if len(self.features) != len(self.labels):
            raise ShapeError(f"{len(self.features)} samples but {len(self.labels)} labels")

    @property
    def feature_shape(self):
        return self.features.shape[1:]

    def subset(self, count):
        return StaticDataset(self.features[:count], self.labels[:count])

    def _batch(self, index, num_steps):
        return direct_encode(self.features[index], num_steps, self.labels[index])


class SequenceDataset(_Dataset):
    """Pre-binned sequences ``[T, N, ...]``; batches use the first ``num_steps`` steps."""

    def __init__(self, inputs, labels):
        self.inputs = np.asarray(getattr(inputs, 'data', inputs), dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.inputs.shape[1] != len(self.labels):
            raise ShapeError(f"{self.inputs.shape[1]} sequences but {len(self.labels)} labels")

    @classmethod
    def from_batch(cls, batch):
        return cls(batch.inputs.data, batch.labels)

    @property
    def feature_shape(self):
        return self.inputs.shape[2:]

    def subset(self, count):
        return SequenceDataset(self.inputs[:, :count], self.labels[:count])

    def _batch(self, index, num_steps):
        if num_steps > self.inputs.shape[0]:
            raise ShapeError(f"requested {num_steps} steps from sequences of {self.inputs.shape[0]}")
        return EncodedBatch(Tensor(self.inputs[:num_steps, index]), self.labels[index])
