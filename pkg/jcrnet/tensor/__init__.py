# -*- coding: utf-8 -*-
"""Dense float tensors with a creation-ordered tape for reverse-mode
differentiation.

Every differentiable op is a :class:`Function` subclass. Applying one to
tensors that require gradients records the function instance (the tape
node) on the output tensor together with a sequence number taken from a
process-wide counter, so creation order is a topological order of the
graph. :func:`backward` replays the reachable nodes in reverse creation
order, each exactly once.

Arrays are float32. A :func:`precision` block switches newly created
leaves to float64, which is what the finite-difference checker uses.
"""

import builtins
import contextlib
import itertools
import logging
import threading

import numpy as np

from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DimensionError
from jcrnet.exceptions import NumericalError
from jcrnet.exceptions import UsageError

logger = logging.getLogger(__name__)

DIV_EPSILON = 1e-4
NORM_EPSILON = 1e-5

_SEQUENCE = itertools.count()
_FLOAT_TYPES = (np.float32, np.float64)


class _LocalState(threading.local):
    def __init__(self):
        self.dtype = np.float32
        self.grad_enabled = True


_state = _LocalState()


def default_dtype():
    return _state.dtype


@contextlib.contextmanager
def precision(dtype):
    previous = _state.dtype
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = previous


@contextlib.contextmanager
def no_grad():
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def _as_array(data):
    # 0-d arrays stay 0-d
    if isinstance(data, (np.ndarray, np.generic)) and data.dtype.type in _FLOAT_TYPES:
        return np.require(data, requirements="C")

    return np.require(np.asarray(data, dtype=_state.dtype), requirements="C")


class Tensor:
    def __init__(self, data, requires_grad=False, creator=None):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.creator = creator

    @classmethod
    def zeros(cls, shape, requires_grad=False):
        return cls(np.zeros(shape, dtype=_state.dtype), requires_grad=requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data.copy()

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, other)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return shift(self, -other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return (
            f"<Tensor shape={self.shape} dtype={self.data.dtype.name} "
            f"requires_grad={self.requires_grad}>"
        )


class Function:
    """A tape node: the op, its inputs and whatever the backward rule
    needs from the forward pass."""

    def __init__(self, *inputs):
        self.inputs = inputs
        self.seq = None

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs, **kwargs):
        func = cls(*inputs)
        out = func.forward(*(tensor.data for tensor in inputs), **kwargs)

        if not np.all(np.isfinite(out)):
            raise NumericalError(f"{cls.__name__} produced non-finite values")

        requires_grad = _state.grad_enabled and any(
            tensor.requires_grad for tensor in inputs
        )
        if not requires_grad:
            return Tensor(out)

        func.seq = next(_SEQUENCE)
        return Tensor(out, requires_grad=True, creator=func)

    def __repr__(self):
        return f"<{type(self).__name__} #{self.seq}>"


def _collect_nodes(root):
    nodes = {}
    stack = [root.creator]
    while stack:
        node = stack.pop()
        if node.seq in nodes:
            continue
        nodes[node.seq] = node
        stack.extend(
            tensor.creator for tensor in node.inputs if tensor.creator is not None
        )

    return [nodes[seq] for seq in sorted(nodes, reverse=True)]


def _accumulate(tensor, grad):
    tensor.grad = grad if tensor.grad is None else tensor.grad + grad


def backward(loss):
    if loss.size != 1 or loss.ndim != 0:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")

    if loss.creator is None:
        raise UsageError("backward called on a tensor with an empty tape")

    seed = np.ones_like(loss.data)
    _accumulate(loss, seed)
    pending = {loss.creator.seq: seed}

    for node in _collect_nodes(loss):
        upstream = pending.pop(node.seq, None)
        if upstream is None:
            continue
        grads = node.backward(upstream)
        for tensor, grad in zip(node.inputs, grads):
            if grad is None or not tensor.requires_grad:
                continue
            _accumulate(tensor, grad)
            if tensor.creator is not None:
                seq = tensor.creator.seq
                pending[seq] = grad if seq not in pending else pending[seq] + grad

    logger.debug("Backward pass done from %s", loss.creator)


# Element-wise arithmetic


def _check_operands(a, b):
    if a.shape == b.shape:
        return

    if (
        a.ndim == 4
        and b.ndim == 4
        and b.shape[2:] == (1, 1)
        and b.shape[0] in (1, a.shape[0])
        and b.shape[1] in (1, a.shape[1])
    ):
        return

    raise DimensionError(f"Incompatible operand shapes {a.shape} and {b.shape}")


def _reduce_to(grad, shape):
    if grad.shape == shape:
        return grad

    axes = tuple(
        axis for axis, extent in enumerate(shape) if extent == 1 and grad.shape[axis] != 1
    )
    return grad.sum(axis=axes, keepdims=True)


class Add(Function):
    def forward(self, a, b):
        self.shapes = a.shape, b.shape
        return a + b

    def backward(self, grad):
        return grad, _reduce_to(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = a.shape, b.shape
        return a - b

    def backward(self, grad):
        return grad, _reduce_to(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, _reduce_to(grad * self.a, self.b.shape)


class Div(Function):
    """Stabilised quotient: denominators with magnitude below eps are
    replaced by sign(b) * eps, sign(0) taken as +1."""

    def forward(self, a, b, epsilon):
        self.a = a
        self.active = np.abs(b) >= epsilon
        floor = np.where(b < 0, -epsilon, epsilon).astype(b.dtype)
        self.denominator = np.where(self.active, b, floor)
        return a / self.denominator

    def backward(self, grad):
        grad_a = grad / self.denominator
        grad_b = -grad * self.a * self.active / (self.denominator * self.denominator)
        return grad_a, _reduce_to(grad_b, self.denominator.shape)


def add(a, b):
    _check_operands(a, b)
    return Add.apply(a, b)


def sub(a, b):
    _check_operands(a, b)
    return Sub.apply(a, b)


def mul(a, b):
    _check_operands(a, b)
    return Mul.apply(a, b)


def div(a, b, epsilon=DIV_EPSILON):
    _check_operands(a, b)
    return Div.apply(a, b, epsilon=epsilon)


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(a, b, kind):
    try:
        op = _ELEMENTWISE[kind]
    except KeyError:
        raise ConfigurationError(f"Unknown element-wise op: {kind}")

    return op(a, b)


class Scale(Function):
    def forward(self, x, factor):
        self.factor = factor
        return x * factor

    def backward(self, grad):
        return (grad * self.factor,)


class Shift(Function):
    def forward(self, x, offset):
        return x + offset

    def backward(self, grad):
        return (grad,)


class Square(Function):
    def forward(self, x):
        self.x = x
        return x * x

    def backward(self, grad):
        return (2 * grad * self.x,)


class Sqrt(Function):
    def forward(self, x):
        self.out = np.sqrt(x)
        return self.out

    def backward(self, grad):
        return (grad / (2 * self.out),)


def scale(x, factor):
    return Scale.apply(x, factor=float(factor))


def shift(x, offset):
    return Shift.apply(x, offset=float(offset))


def square(x):
    return Square.apply(x)


def sqrt(x):
    return Sqrt.apply(x)


# Activations


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad):
        return (grad * self.mask,)


class PReLU(Function):
    def forward(self, x, slope):
        self.x = x
        self.slope = slope
        return np.where(x > 0, x, slope[0] * x).astype(np.result_type(x, slope))

    def backward(self, grad):
        positive = self.x > 0
        grad_x = np.where(positive, grad, self.slope[0] * grad)
        grad_slope = np.where(positive, 0, grad * self.x).sum().reshape(1)
        return grad_x, grad_slope.astype(self.slope.dtype)


class Sigmoid(Function):
    def forward(self, x):
        # exp only ever sees non-positive arguments
        e = np.exp(-np.abs(x))
        self.out = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1 - self.out),)


def relu(x):
    return ReLU.apply(x)


def prelu(x, slope):
    if slope.shape != (1,):
        raise DimensionError(f"PReLU slope must have shape (1,), got {slope.shape}")
    return PReLU.apply(x, slope)


def sigmoid(x):
    return Sigmoid.apply(x)


_ACTIVATIONS = {
    "relu": lambda x, slope: relu(x),
    "prelu": prelu,
    "sigmoid": lambda x, slope: sigmoid(x),
}


def activation(x, kind, slope=None):
    try:
        op = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigurationError(f"Unknown activation kind: {kind}")

    if kind == "prelu" and slope is None:
        raise ConfigurationError("prelu needs a slope tensor")

    return op(x, slope)


class Clamp(Function):
    def forward(self, x, low, high):
        self.mask = (x >= low) & (x <= high)
        return np.clip(x, low, high)

    def backward(self, grad):
        return (grad * self.mask,)


def clamp(x, low, high):
    return Clamp.apply(x, low=low, high=high)


# Reductions


class Sum(Function):
    def forward(self, x):
        self.shape = x.shape
        return np.asarray(x.sum(), dtype=x.dtype)

    def backward(self, grad):
        return (np.full(self.shape, grad, dtype=grad.dtype),)


class Mean(Function):
    def forward(self, x):
        self.shape = x.shape
        return np.asarray(x.mean(), dtype=x.dtype)

    def backward(self, grad):
        count = np.prod(self.shape)
        return (np.full(self.shape, grad / count, dtype=grad.dtype),)


class GlobalAvgPool(Function):
    def forward(self, x):
        self.shape = x.shape
        return x.mean(axis=(2, 3), keepdims=True)

    def backward(self, grad):
        area = self.shape[2] * self.shape[3]
        return (np.broadcast_to(grad / area, self.shape).copy(),)


def sum(x):  # noqa: A001
    return Sum.apply(x)


def mean(x):
    return Mean.apply(x)


def global_avg_pool(x):
    if x.ndim != 4 or x.shape[2] < 1 or x.shape[3] < 1:
        raise DimensionError(f"global_avg_pool needs (N,C,H,W), got {x.shape}")
    return GlobalAvgPool.apply(x)


# Structure


class Concat(Function):
    def forward(self, *arrays):
        self.sizes = [array.shape[1] for array in arrays]
        return np.concatenate(arrays, axis=1)

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=1))


class ChannelSlice(Function):
    def forward(self, x, start, stop):
        self.shape = x.shape
        self.start, self.stop = start, stop
        return x[:, start:stop]

    def backward(self, grad):
        full = np.zeros(self.shape, dtype=grad.dtype)
        full[:, self.start : self.stop] = grad
        return (full,)


class Reshape(Function):
    def forward(self, x, shape):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


def concat(xs, axis=1):
    if axis != 1:
        raise ConfigurationError("concat only joins along the channel axis")

    if not xs:
        raise DimensionError("concat needs at least one tensor")

    reference = xs[0].shape
    for tensor in xs[1:]:
        if tensor.ndim != 4 or (tensor.shape[0],) + tensor.shape[2:] != (
            reference[0],
        ) + reference[2:]:
            raise DimensionError(
                f"concat extents differ: {reference} and {tensor.shape}"
            )

    if len(xs) == 1:
        return xs[0]

    return Concat.apply(*xs)


def channel_slice(x, start, stop):
    if not 0 <= start < stop <= x.shape[1]:
        raise DimensionError(f"Bad channel range {start}:{stop} for {x.shape}")
    return ChannelSlice.apply(x, start=start, stop=stop)


def split(x, sizes):
    if builtins.sum(sizes) != x.shape[1]:
        raise DimensionError(f"Split sizes {sizes} do not cover {x.shape[1]} channels")

    parts = []
    start = 0
    for size in sizes:
        parts.append(channel_slice(x, start, start + size))
        start += size
    return parts


def reshape(x, shape):
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"Cannot reshape {x.shape} to {shape}")
    return Reshape.apply(x, shape=shape)


# Normalisation


class InstanceNorm(Function):
    def forward(self, x, gamma, beta, epsilon):
        mean_ = x.mean(axis=(2, 3), keepdims=True)
        centered = x - mean_
        var = (centered * centered).mean(axis=(2, 3), keepdims=True)
        self.inv_std = 1 / np.sqrt(var + epsilon)
        self.xhat = centered * self.inv_std
        self.gamma = gamma.reshape(1, -1, 1, 1)
        return self.gamma * self.xhat + beta.reshape(1, -1, 1, 1)

    def backward(self, grad):
        area = self.xhat.shape[2] * self.xhat.shape[3]
        grad_xhat = grad * self.gamma
        grad_x = (self.inv_std / area) * (
            area * grad_xhat
            - grad_xhat.sum(axis=(2, 3), keepdims=True)
            - self.xhat * (grad_xhat * self.xhat).sum(axis=(2, 3), keepdims=True)
        )
        grad_gamma = (grad * self.xhat).sum(axis=(0, 2, 3))
        grad_beta = grad.sum(axis=(0, 2, 3))
        return grad_x, grad_gamma, grad_beta


def instance_norm(x, gamma, beta, epsilon=NORM_EPSILON):
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(
            f"Instance norm affine shapes {gamma.shape}/{beta.shape} "
            f"do not match {channels} channels"
        )
    return InstanceNorm.apply(x, gamma, beta, epsilon=epsilon)


