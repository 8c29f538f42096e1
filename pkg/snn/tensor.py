"""Dense tensors with a single-use reverse-mode tape.

A ``Tensor`` wraps a numpy array. Every operation on tensors that require
gradients records a ``Function`` node holding the inputs it needs for its
backward rule. ``Tensor.backward`` walks the recorded nodes once in reverse
topological order, accumulates gradients into leaves and then frees the tape.

Nodes whose ``custom_backward`` flag is set (spike surrogates, straight-through
quantizers) supply their own backward rule in place of the derivative of
their forward function.
"""
import logging
from contextlib import contextmanager
from contextvars import ContextVar

import numpy as np

from .exceptions import GraphError, ShapeError

logger = logging.getLogger(__name__)

_grad_enabled = ContextVar('grad_enabled', default=True)


@contextmanager
def no_grad():
    """Run the enclosed block without recording a tape."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled():
    return _grad_enabled.get()


def as_array(data, dtype=None):
    """Convert ``data`` to the engine's float representation.

    Float64 is kept only for explicit float64 ndarrays (used by the
    finite-difference checks); everything else becomes float32.
    """
    if isinstance(data, Tensor):
        data = data.data
    if dtype is not None:
        return np.asarray(data, dtype=dtype)
    if isinstance(data, np.ndarray) and data.dtype == np.float64:
        return data
    return np.asarray(data, dtype=np.float32)


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    grad = np.asarray(grad)
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Function:
    """A recorded operation on tensors.

    Subclasses implement ``forward`` on raw arrays and ``backward`` returning
    one gradient per input (``None`` for inputs without a gradient).
    """

    custom_backward = False

    def __init__(self, *inputs):
        self.inputs = inputs
        self.saved = ()

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad):
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs, **kwargs):
        inputs = tuple(t if isinstance(t, Tensor) else Tensor(t) for t in inputs)
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        if not requires_grad:
            fn.saved = ()
            return Tensor(out)
        return Tensor(out, requires_grad=True, _ctx=fn)


class Tensor:
    """A dense n-dimensional float array participating in autodiff."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None, _ctx=None):
        self.data = as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._ctx = _ctx
        self._consumed = False

    def __repr__(self):
        flag = ', requires_grad=True' if self.requires_grad else ''
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._ctx is None

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # arithmetic

    def __add__(self, other):
        return Add.apply(self, other)

    def __radd__(self, other):
        return Add.apply(other, self)

    def __sub__(self, other):
        return Sub.apply(self, other)

    def __rsub__(self, other):
        return Sub.apply(other, self)

    def __mul__(self, other):
        return Mul.apply(self, other)

    def __rmul__(self, other):
        return Mul.apply(other, self)

    def __truediv__(self, scalar):
        return Mul.apply(self, 1.0 / float(scalar))

    def __neg__(self):
        return Neg.apply(self)

    def __pow__(self, exponent):
        return Pow.apply(self, exponent=float(exponent))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return GetItem.apply(self, index=index)

    def sum(self, axis=None, keepdims=False):
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / max(count, 1))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    # autodiff

    def _accumulate(self, grad):
        grad = np.asarray(grad, dtype=self.dtype)
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.dtype, copy=True)
        else:
            self.grad += grad

    def _topological_order(self):
        order, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in node._ctx.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self):
        """Backpropagate from this scalar through the recorded tape."""
        if self._consumed:
            raise GraphError("backward called twice on a consumed graph")
        if self.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("loss does not depend on any tensor that requires grad")

        order = self._topological_order()
        if any(node._consumed for node in order):
            raise GraphError("loss reaches a tensor whose graph was already consumed")
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node.is_leaf:
                node._accumulate(grad)
                continue
            fn = node._ctx
            input_grads = fn.backward(grad)
            if not isinstance(input_grads, tuple):
                input_grads = (input_grads,)
            for tensor, g in zip(fn.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                g = unbroadcast(g, tensor.shape)
                key = id(tensor)
                pending[key] = pending[key] + g if key in pending else g

        # single-use tape
        for node in order:
            if node._ctx is not None:
                node._ctx.inputs = ()
                node._ctx.saved = ()
                node._ctx = None
                node._consumed = True


class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        self.saved = (a, b)
        return a * b

    def backward(self, grad):
        a, b = self.saved
        return grad * b, grad * a


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return -grad


class Pow(Function):
    def forward(self, a, exponent):
        self.saved = (a, exponent)
        return a ** exponent

    def backward(self, grad):
        a, exponent = self.saved
        return grad * exponent * a ** (exponent - 1)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        self.saved = (a, b)
        return a @ b

    def backward(self, grad):
        a, b = self.saved
        return grad @ b.T, a.T @ grad


class Sum(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.saved = (a.shape, axis, keepdims)
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        shape, axis, keepdims = self.saved
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return np.broadcast_to(grad, shape)


class Reshape(Function):
    def forward(self, a, shape):
        self.saved = (a.shape,)
        return a.reshape(shape)

    def backward(self, grad):
        (shape,) = self.saved
        return grad.reshape(shape)


class GetItem(Function):
    def forward(self, a, index):
        self.saved = (a.shape, a.dtype, index)
        return np.asarray(a[index])

    def backward(self, grad):
        shape, dtype, index = self.saved
        out = np.zeros(shape, dtype=dtype)
        np.add.at(out, index, grad)
        return out


class Stack(Function):
    def forward(self, *arrays, axis=0):
        self.saved = (len(arrays), axis)
        return np.stack(arrays, axis=axis)

    def backward(self, grad):
        count, axis = self.saved
        return tuple(np.take(grad, i, axis=axis) for i in range(count))


class LogSoftmax(Function):
    def forward(self, a, axis=-1):
        shifted = a - a.max(axis=axis, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        self.saved = (np.exp(out), axis)
        return out

    def backward(self, grad):
        softmax, axis = self.saved
        return grad - softmax * grad.sum(axis=axis, keepdims=True)


class Identity(Function):
    def forward(self, a):
        return a

    def backward(self, grad):
        return grad


def matmul(a, b):
    """Matrix product of a ``[m, k]`` and a ``[k, n]`` tensor."""
    return MatMul.apply(a, b)


def stack(tensors, axis=0):
    return Stack.apply(*tensors, axis=axis)


def log_softmax(x, axis=-1):
    return LogSoftmax.apply(x, axis=axis)


def identity(x):
    return Identity.apply(x)
