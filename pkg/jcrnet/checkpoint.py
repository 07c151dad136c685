# -*- coding: utf-8 -*-
"""Binary checkpoint format.

Layout, all integers little-endian::

    b"JCRN" | u32 version | u32 len | config echo (UTF-8 key=value text)
    u32 count | count x record
    u32 has_state [| u32 step | u32 T | u64 seed | f64 eta_max | f64 eta_min
                   | u32 count | count x (record m/<name>, record v/<name>)]

    record := u32 name_len | name | u32 rank | rank x u32 extent
              | u32 payload_len | u32 crc32(payload) | payload (f32 LE)
"""

import collections
import logging
import struct
import zlib

import numpy as np

from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import FormatError
from jcrnet.exceptions import UsageError
from jcrnet.optim import LRSchedule
from jcrnet.optim import TrainState
from jcrnet.params import ParamStore

logger = logging.getLogger(__name__)

MAGIC = b"JCRN"
VERSION = 1
MAX_RANK = 8
U32_MAX = 2**32 - 1

_FIRST = "m/"
_SECOND = "v/"


def _u32(value, what):
    if not 0 <= value <= U32_MAX:
        raise FormatError(f"{what} {value} does not fit in 32 bits")
    return struct.pack("<I", value)


def _record(name, array):
    encoded = name.encode("utf-8")
    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    parts = [_u32(len(encoded), "Name length"), encoded, _u32(array.ndim, "Rank")]
    parts.extend(_u32(extent, f"Extent of {name}") for extent in array.shape)
    parts.append(_u32(len(payload), f"Payload of {name}"))
    parts.append(struct.pack("<I", zlib.crc32(payload)))
    parts.append(payload)
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, size, what):
        end = self.offset + size
        if end > len(self.data):
            raise FormatError(
                f"Checkpoint truncated at byte {self.offset} reading {what}: "
                f"need {size} bytes, {len(self.data) - self.offset} left"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def u32(self, what):
        return self.unpack("<I", what)[0]

    def record(self):
        start = self.offset
        name = self.take(self.u32("name length"), "name")
        try:
            name = name.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"Record name at byte {start} is not UTF-8")

        rank = self.u32("rank")
        if rank > MAX_RANK:
            raise FormatError(f"Record {name} at byte {start} has rank {rank}")
        shape = self.unpack(f"<{rank}I", "extents")

        size, checksum = self.unpack("<II", "payload header")
        expected = 4 * int(np.prod(shape, dtype=np.int64))
        if size != expected:
            raise FormatError(
                f"Record {name} at byte {start}: payload of {size} bytes "
                f"does not match extents {shape} ({expected} bytes)"
            )

        payload = self.take(size, f"payload of {name}")
        if zlib.crc32(payload) != checksum:
            raise FormatError(f"Record {name} at byte {start} fails its checksum")

        array = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)
        return name, array


class Checkpoint:
    def __init__(self, params, config_text="", state=None):
        self.params = params
        self.config_text = config_text
        self.state = state

    @classmethod
    def from_bytes(cls, data):
        reader = _Reader(data)
        if reader.take(len(MAGIC), "magic") != MAGIC:
            raise FormatError("Not a JCRN checkpoint (bad magic at byte 0)")

        version = reader.u32("version")
        if version != VERSION:
            raise FormatError(f"Unsupported checkpoint version {version} at byte 4")

        config = reader.take(reader.u32("config length"), "config")
        try:
            config_text = config.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("Config echo at byte 12 is not UTF-8")

        params = ParamStore()
        for _ in range(reader.u32("tensor count")):
            start = reader.offset
            name, array = reader.record()
            if name in params:
                raise FormatError(f"Duplicate tensor {name} at byte {start}")
            params.add(name, array)

        state = None
        if reader.u32("state flag"):
            state = _read_state(reader, params)

        if reader.offset != len(data):
            raise FormatError(f"Trailing bytes after checkpoint at byte {reader.offset}")

        return cls(params, config_text, state)

    @classmethod
    def from_path(cls, path):
        with open(path, "rb") as f:
            data = f.read()
        try:
            return cls.from_bytes(data)
        except FormatError as error:
            raise FormatError(f"{path}: {error}")

    def to_bytes(self):
        config = self.config_text.encode("utf-8")
        parts = [MAGIC, _u32(VERSION, "Version"), _u32(len(config), "Config length"), config]
        parts.append(_u32(len(self.params), "Tensor count"))
        parts.extend(_record(name, tensor.data) for name, tensor in self.params.items())

        if self.state is None:
            parts.append(_u32(0, "State flag"))
        else:
            parts.append(_u32(1, "State flag"))
            parts.append(_state_bytes(self.state))

        return b"".join(parts)

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())
        logger.info("Wrote checkpoint %s", path)

    def require_state(self):
        if self.state is None:
            raise UsageError("Checkpoint carries no training state; it cannot be resumed")
        return self.state

    def __repr__(self):
        state = "with" if self.state is not None else "without"
        return f"<Checkpoint {len(self.params)} tensors {state} train state>"


def _state_bytes(state):
    sched = state.schedule
    parts = [
        _u32(state.step, "Step"),
        _u32(sched.total_steps, "Total steps"),
        struct.pack("<Qdd", state.seed, sched.eta_max, sched.eta_min),
        _u32(len(state.moments), "Moment count"),
    ]
    for name, (first, second) in state.moments.items():
        parts.append(_record(_FIRST + name, first))
        parts.append(_record(_SECOND + name, second))
    return b"".join(parts)


def _read_state(reader, params):
    step = reader.u32("step")
    total_steps = reader.u32("total steps")
    seed, eta_max, eta_min = reader.unpack("<Qdd", "schedule")

    moments = collections.OrderedDict()
    for _ in range(reader.u32("moment count")):
        start = reader.offset
        first_name, first = reader.record()
        second_name, second = reader.record()
        name = first_name[len(_FIRST) :]
        if (
            not first_name.startswith(_FIRST)
            or second_name != _SECOND + name
            or name in moments
        ):
            raise FormatError(
                f"Malformed moment pair {first_name}/{second_name} at byte {start}"
            )
        moments[name] = (first, second)

    try:
        schedule = LRSchedule(total_steps, eta_max, eta_min)
        state = TrainState(schedule, seed=seed, step=step, moments=moments)
        state.check(params)
    except ConfigurationError as error:
        raise FormatError(f"Training state does not match the tensors: {error}")
    return state


def save_checkpoint(path, params, state=None, config_text=""):
    Checkpoint(params, config_text, state).save(path)


def load_checkpoint(path):
    return Checkpoint.from_path(path)
