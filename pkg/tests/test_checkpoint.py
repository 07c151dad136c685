import numpy as np
import pytest

from jcrnet import checkpoint
from jcrnet import model
from jcrnet import optim
from jcrnet.exceptions import FormatError
from jcrnet.exceptions import UsageError


@pytest.fixture
def params(tiny_config):
    return model.build_params(tiny_config, seed=2)


@pytest.fixture
def state(params, rng):
    state = optim.TrainState.for_params(params, optim.LRSchedule(10), seed=9)
    for name, tensor in params.items():
        state.moments[name] = (
            rng.standard_normal(tensor.shape).astype(np.float32),
            rng.uniform(0, 1, size=tensor.shape).astype(np.float32),
        )
    state.step = 4
    return state


def assert_same_params(first, second):
    assert first.names() == second.names()
    for name in first.names():
        np.testing.assert_array_equal(first[name].data, second[name].data)


def test_round_trip_without_state(params):
    loaded = checkpoint.Checkpoint.from_bytes(
        checkpoint.Checkpoint(params, "model.width = 8\n").to_bytes()
    )

    assert_same_params(loaded.params, params)
    assert loaded.config_text == "model.width = 8\n"
    assert loaded.state is None


def test_round_trip_with_state(params, state):
    loaded = checkpoint.Checkpoint.from_bytes(
        checkpoint.Checkpoint(params, "", state).to_bytes()
    ).state

    assert loaded.step == 4
    assert loaded.seed == 9
    assert loaded.schedule == state.schedule
    assert list(loaded.moments) == list(state.moments)
    for name, (first, second) in state.moments.items():
        np.testing.assert_array_equal(loaded.moments[name][0], first)
        np.testing.assert_array_equal(loaded.moments[name][1], second)


def test_save_load_save_is_byte_identical(tmp_path, params, state):
    first = tmp_path / "first.ckpt"
    second = tmp_path / "second.ckpt"
    checkpoint.save_checkpoint(first, params, state, "train.steps = 10\n")
    loaded = checkpoint.load_checkpoint(first)
    loaded.save(second)

    assert first.read_bytes() == second.read_bytes()


def test_header_layout(params):
    data = checkpoint.Checkpoint(params, "abc").to_bytes()

    assert data[:4] == b"JCRN"
    assert data[4:8] == (1).to_bytes(4, "little")
    assert data[8:12] == (3).to_bytes(4, "little")
    assert data[12:15] == b"abc"
    assert data[-4:] == bytes(4)


def test_flipped_payload_byte_fails_checksum(params):
    data = bytearray(checkpoint.Checkpoint(params).to_bytes())
    data[-8] ^= 0x40

    with pytest.raises(FormatError, match="checksum"):
        checkpoint.Checkpoint.from_bytes(bytes(data))


def test_bad_magic(params):
    data = checkpoint.Checkpoint(params).to_bytes()

    with pytest.raises(FormatError, match="magic"):
        checkpoint.Checkpoint.from_bytes(b"XXXX" + data[4:])


def test_config_echo_that_is_not_utf8_is_a_format_error(params):
    data = bytearray(checkpoint.Checkpoint(params, "model.width = 8\n").to_bytes())
    data[12] = 0xFF

    with pytest.raises(FormatError, match="byte 12"):
        checkpoint.Checkpoint.from_bytes(bytes(data))


def test_unknown_version(params):
    data = checkpoint.Checkpoint(params).to_bytes()

    with pytest.raises(FormatError, match="version 2"):
        checkpoint.Checkpoint.from_bytes(data[:4] + (2).to_bytes(4, "little") + data[8:])


@pytest.mark.parametrize("keep", [3, 11, 40, -1])
def test_truncated_checkpoint(params, keep):
    data = checkpoint.Checkpoint(params).to_bytes()

    with pytest.raises(FormatError, match="truncated"):
        checkpoint.Checkpoint.from_bytes(data[:keep])


def test_trailing_bytes(params):
    data = checkpoint.Checkpoint(params).to_bytes()

    with pytest.raises(FormatError, match="Trailing"):
        checkpoint.Checkpoint.from_bytes(data + b"\0")


def test_state_for_other_parameters_is_rejected(state):
    cfg = model.ModelConfig(width=8, jrs_mid=8, detail_width=4, use_ias=False)
    other = model.build_params(cfg)
    data = checkpoint.Checkpoint(other, "", state).to_bytes()

    with pytest.raises(FormatError, match="Training state"):
        checkpoint.Checkpoint.from_bytes(data)


def test_load_error_names_the_path(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"JCR")

    with pytest.raises(FormatError, match="junk.ckpt"):
        checkpoint.load_checkpoint(path)


def test_require_state(params, state):
    assert checkpoint.Checkpoint(params, "", state).require_state() is state

    with pytest.raises(UsageError):
        checkpoint.Checkpoint(params).require_state()
