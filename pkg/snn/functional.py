"""Convolution, pooling, normalization and dropout on ``Tensor``."""
import logging

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .exceptions import ShapeError, SpecError, StateError
from .tensor import Function, Tensor

logger = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def conv_output_size(size, kernel, stride=1, padding=0):
    return (size + 2 * padding - kernel) // stride + 1


def im2col(x, kh, kw, stride):
    """Unfold ``[B, C, H, W]`` into ``[B, C*kh*kw, H'*W']`` patch columns."""
    x = np.ascontiguousarray(x)
    batch, channels, height, width = x.shape
    out_h = (height - kh) // stride + 1
    out_w = (width - kw) // stride + 1
    sb, sc, sh, sw = x.strides
    patches = as_strided(
        x,
        shape=(batch, channels, kh, kw, out_h, out_w),
        strides=(sb, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return patches.reshape(batch, channels * kh * kw, out_h * out_w)


def col2im(cols, x_shape, kh, kw, stride):
    """Scatter-add patch columns back onto an image of ``x_shape``."""
    batch, channels, height, width = x_shape
    out_h = (height - kh) // stride + 1
    out_w = (width - kw) // stride + 1
    cols = cols.reshape(batch, channels, kh, kw, out_h, out_w)
    out = np.zeros(x_shape, dtype=cols.dtype)
    for i in range(kh):
        i_end = i + stride * out_h
        for j in range(kw):
            j_end = j + stride * out_w
            out[:, :, i:i_end:stride, j:j_end:stride] += cols[:, :, i, j]
    return out


class Conv2d(Function):
    def forward(self, x, w, stride=1, padding=0):
        if x.ndim != 4 or w.ndim != 4:
            raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {w.shape}")
        batch, channels, height, width = x.shape
        out_channels, kernel_channels, kh, kw = w.shape
        if channels != kernel_channels:
            raise ShapeError(f"conv2d channel mismatch: input {x.shape}, kernel {w.shape}")
        if kh > height + 2 * padding or kw > width + 2 * padding:
            raise ShapeError(
                f"kernel {kh}x{kw} larger than padded input {height + 2 * padding}x{width + 2 * padding}"
            )
        if padding:
            x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        out_h = conv_output_size(height, kh, stride, padding)
        out_w = conv_output_size(width, kw, stride, padding)
        cols = im2col(x, kh, kw, stride)
        w_mat = w.reshape(out_channels, -1)
        out = np.matmul(w_mat, cols)
        self.saved = (cols, w_mat, w.shape, x.shape, stride, padding)
        return out.reshape(batch, out_channels, out_h, out_w)

    def backward(self, grad):
        cols, w_mat, w_shape, padded_shape, stride, padding = self.saved
        batch, out_channels = grad.shape[:2]
        g = grad.reshape(batch, out_channels, -1)
        grad_w = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(w_shape)
        grad_cols = np.matmul(w_mat.T, g)
        grad_x = col2im(grad_cols, padded_shape, w_shape[2], w_shape[3], stride)
        if padding:
            grad_x = grad_x[:, :, padding:-padding, padding:-padding]
        return grad_x, grad_w


class MaxPool2d(Function):
    def forward(self, x, window=2):
        if x.ndim != 4:
            raise ShapeError(f"maxpool2d expects [B, C, H, W], got {x.shape}")
        batch, channels, height, width = x.shape
        if height % window or width % window:
            raise ShapeError(f"spatial dims {height}x{width} not divisible by window {window}")
        out_h, out_w = height // window, width // window
        windows = (
            x.reshape(batch, channels, out_h, window, out_w, window)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, out_h, out_w, window * window)
        )
        # argmax returns the first maximum in row-major window order
        index = windows.argmax(axis=-1)[..., None]
        self.saved = (index, x.shape, window)
        return np.take_along_axis(windows, index, axis=-1)[..., 0]

    def backward(self, grad):
        index, shape, window = self.saved
        batch, channels, height, width = shape
        out_h, out_w = height // window, width // window
        routed = np.zeros((batch, channels, out_h, out_w, window * window), dtype=grad.dtype)
        np.put_along_axis(routed, index, grad[..., None], axis=-1)
        return (
            routed.reshape(batch, channels, out_h, out_w, window, window)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(shape)
        )


class RunningStats:
    """Per-channel running mean/variance shared across time steps."""

    def __init__(self, num_features, momentum=BN_MOMENTUM):
        self.mean = np.zeros(num_features, dtype=np.float32)
        self.var = np.ones(num_features, dtype=np.float32)
        self.momentum = momentum
        self.tracked = 0

    def update(self, batch_mean, batch_var, count):
        unbiased = batch_var * count / (count - 1) if count > 1 else batch_var
        m = self.momentum
        self.mean = ((1 - m) * self.mean + m * batch_mean).astype(np.float32)
        self.var = ((1 - m) * self.var + m * unbiased).astype(np.float32)
        self.tracked += 1


def _bn_axes(x):
    if x.ndim == 4:
        return (0, 2, 3), (1, -1, 1, 1)
    if x.ndim == 2:
        return (0,), (1, -1)
    raise ShapeError(f"batchnorm expects [B, C] or [B, C, H, W], got {x.shape}")


class BatchNorm(Function):
    def forward(self, x, gamma, beta, mean=None, var=None, eps=BN_EPS, training=True):
        axes, view = _bn_axes(x)
        inv_std = 1.0 / np.sqrt(var.reshape(view) + eps)
        x_hat = (x - mean.reshape(view)) * inv_std
        count = x.size // x.shape[1]
        self.saved = (x_hat, inv_std, gamma.reshape(view), axes, count, training)
        return (gamma.reshape(view) * x_hat + beta.reshape(view)).astype(x.dtype)

    def backward(self, grad):
        x_hat, inv_std, gamma, axes, count, training = self.saved
        grad_beta = grad.sum(axis=axes)
        grad_gamma = (grad * x_hat).sum(axis=axes)
        if training:
            view = gamma.shape
            grad_x = (gamma * inv_std / count) * (
                count * grad - grad_beta.reshape(view) - x_hat * grad_gamma.reshape(view)
            )
        else:
            grad_x = grad * gamma * inv_std
        return grad_x, grad_gamma, grad_beta


def conv2d(x, kernel, stride=1, padding=0):
    return Conv2d.apply(x, kernel, stride=stride, padding=padding)


def maxpool2d(x, window=2):
    return MaxPool2d.apply(x, window=window)


def batchnorm(x, gamma, beta, running_stats, training=True, eps=BN_EPS):
    """Normalize per channel over batch and spatial axes.

    Training mode normalizes with batch statistics and updates
    ``running_stats``; eval mode uses the running statistics, which must
    have seen at least one training update.
    """
    channels = x.shape[1] if x.ndim > 1 else None
    if channels != gamma.shape[0] or channels != beta.shape[0]:
        raise ShapeError(
            f"batchnorm channel mismatch: input {x.shape}, gamma {gamma.shape}, beta {beta.shape}"
        )
    axes, _ = _bn_axes(x)
    if training:
        data = x.data.astype(np.float64)
        mean = data.mean(axis=axes)
        var = data.var(axis=axes)
        running_stats.update(mean, var, x.size // channels)
    else:
        if not running_stats.tracked:
            raise StateError("batchnorm evaluated before any training update")
        mean, var = running_stats.mean, running_stats.var
    mean = mean.astype(x.dtype)
    var = var.astype(x.dtype)
    return BatchNorm.apply(x, gamma, beta, mean=mean, var=var, eps=eps, training=training)


def dropout(x, p, training, rng):
    """Zero elements with probability ``p`` and rescale survivors in training."""
    if not 0.0 <= p < 1.0:
        raise SpecError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = rng.random(x.shape) >= p
    mask = keep.astype(x.dtype) / np.asarray(1.0 - p, dtype=x.dtype)
    return x * Tensor(mask)
