import numpy as np
import pytest

from jcrnet import imageio
from jcrnet.model import ModelConfig


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow experiments"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return

    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def _levels(pixels):
    return imageio.quantize(pixels).astype(np.float32) / 255.0


def make_pair(rng, height, width):
    """A smooth normal-light image and a darkened, slightly noisy copy."""
    rows = np.arange(height)[:, None, None]
    cols = np.arange(width)[None, :, None]
    phase = rng.uniform(0, 2 * np.pi, size=3)
    high = 0.5 + 0.35 * np.sin(rows / 9.0 + phase) * np.cos(cols / 11.0 - phase)
    low = high * 0.25 + rng.uniform(0, 0.02, size=high.shape)
    return _levels(low), _levels(high)


def write_dataset(root, pairs, extension=".ppm"):
    (root / "low").mkdir(parents=True)
    (root / "high").mkdir(parents=True)
    for index, (low, high) in enumerate(pairs):
        name = f"{index:04d}{extension}"
        imageio.save_image(imageio.ImageBuffer(low), root / "low" / name)
        imageio.save_image(imageio.ImageBuffer(high), root / "high" / name)
    return root


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=1234))


@pytest.fixture
def desk_config():
    return ModelConfig.desk()


@pytest.fixture
def tiny_config():
    return ModelConfig(width=8, jrs_mid=8, detail_width=4)


@pytest.fixture
def paired_dir(tmp_path, rng):
    pairs = [make_pair(rng, 32, 32) for _ in range(4)]
    return write_dataset(tmp_path / "data", pairs)
