import numpy as np
import pytest

from jcrnet import dataset
from jcrnet import imageio
from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DimensionError

from tests.conftest import make_pair
from tests.conftest import write_dataset


def test_load_pairs_matches_by_filename(paired_dir):
    pairs = dataset.load_pairs(paired_dir)

    assert [pair.name for pair in pairs] == ["0000.ppm", "0001.ppm", "0002.ppm", "0003.ppm"]
    assert all(pair.low.pixels.shape == (32, 32, 3) for pair in pairs)
    assert not np.array_equal(pairs[0].low.pixels, pairs[0].high.pixels)


def test_unpaired_files_are_reported(paired_dir, caplog):
    image = imageio.ImageBuffer(np.zeros((4, 4, 3)))
    imageio.save_image(image, paired_dir / "low" / "extra.ppm")
    imageio.save_image(image, paired_dir / "high" / "other.png")
    (paired_dir / "low" / "notes.txt").write_text("not an image")

    names, unpaired = dataset.pair_names(paired_dir)
    assert len(names) == 4
    assert unpaired == ["low/extra.ppm", "high/other.png"]

    dataset.load_pairs(paired_dir)
    assert "low/extra.ppm" in caplog.text
    assert "high/other.png" in caplog.text


def test_pairs_must_agree_in_size(tmp_path, rng):
    low, _ = make_pair(rng, 8, 8)
    _, high = make_pair(rng, 8, 12)
    write_dataset(tmp_path, [(low, high)])

    with pytest.raises(DimensionError, match="0000.ppm"):
        dataset.load_pairs(tmp_path)


def test_missing_folder(tmp_path):
    (tmp_path / "low").mkdir()

    with pytest.raises(ConfigurationError, match="high"):
        dataset.load_pairs(tmp_path)


def test_usable_pairs_skips_small_images(paired_dir):
    pairs = dataset.load_pairs(paired_dir)

    assert dataset.usable_pairs(pairs, 32) == pairs
    with pytest.raises(ConfigurationError):
        dataset.usable_pairs(pairs, 33)
