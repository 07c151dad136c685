# -*- coding: utf-8 -*-

import collections
import logging
import math

import numpy as np

from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DimensionError
from jcrnet.tensor import Tensor

logger = logging.getLogger(__name__)

PRELU_INIT = 0.25

# counter-based streams carved out of one seed
INIT_STREAM = 0
PATCH_STREAM = 1


def make_rng(seed, stream=INIT_STREAM, index=0):
    """Philox generator whose counter encodes (stream, index), so any draw
    sequence can be recreated from the seed alone."""
    counter = (int(stream) << 192) | (int(index) << 128)
    return np.random.Generator(np.random.Philox(key=int(seed), counter=counter))


class ParamStore:
    """Ordered, name-keyed trainable tensors. Insertion order is the
    checkpoint order."""

    def __init__(self):
        self._tensors = collections.OrderedDict()

    def add(self, name, data):
        if name in self._tensors:
            raise ConfigurationError(f"Parameter declared twice: {name}")
        tensor = Tensor(np.asarray(data, dtype=np.float32), requires_grad=True)
        self._tensors[name] = tensor
        return tensor

    def set(self, name, data):
        current = self[name]
        data = np.asarray(data, dtype=np.float32)
        if data.shape != current.shape:
            raise DimensionError(
                f"Parameter {name} has shape {current.shape}, got {data.shape}"
            )
        current.data = np.ascontiguousarray(data)

    def scope(self, prefix):
        return ParamScope(self, prefix)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def zero_grad(self):
        for tensor in self._tensors.values():
            tensor.grad = None

    def count(self):
        return sum(tensor.size for tensor in self._tensors.values())

    def copy(self):
        store = ParamStore()
        for name, tensor in self._tensors.items():
            store.add(name, tensor.data.copy())
        return store

    def __getitem__(self, name):
        try:
            return self._tensors[name]
        except KeyError:
            raise ConfigurationError(f"Unknown parameter: {name}")

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def __repr__(self):
        return f"<ParamStore {len(self)} tensors, {self.count()} values>"


class ParamScope:
    """Prefix view over a :class:`ParamStore`; blocks read and declare
    their parameters by local name."""

    def __init__(self, store, prefix, rng=None):
        self.store = store
        self.prefix = prefix
        self.rng = rng

    def _name(self, name):
        return f"{self.prefix}.{name}" if self.prefix else name

    def scope(self, name):
        return ParamScope(self.store, self._name(name), self.rng)

    def __getitem__(self, name):
        return self.store[self._name(name)]

    def __contains__(self, name):
        return self._name(name) in self.store

    def conv(self, name, cin, cout, kernel=3, gain=1.0, bias=0.0):
        """Kaiming-uniform weights scaled by ``gain``; the draw does not
        depend on ``gain``, so later parameters keep their values."""
        fan_in = cin * kernel * kernel
        bound = math.sqrt(6.0 / fan_in)
        weight = self.rng.uniform(-bound, bound, size=(cout, cin, kernel, kernel))
        self.store.add(self._name(f"{name}.weight"), gain * weight)
        self.store.add(self._name(f"{name}.bias"), np.full(cout, bias))

    def prelu(self, name):
        self.store.add(self._name(f"{name}.slope"), np.full(1, PRELU_INIT))

    def matrix(self, name, rows, cols):
        bound = math.sqrt(6.0 / cols)
        self.store.add(self._name(name), self.rng.uniform(-bound, bound, size=(rows, cols)))

    def norm(self, name, channels):
        self.store.add(self._name(f"{name}.gamma"), np.ones(channels))
        self.store.add(self._name(f"{name}.beta"), np.zeros(channels))

    def scalar(self, name, value):
        self.store.add(self._name(name), np.full((1, 1, 1, 1), value))
