# -*- coding: utf-8 -*-
"""Paired low-light / normal-light image folders.

A dataset directory holds ``low/`` and ``high/`` sub-directories whose
files are paired strictly by filename.
"""

import collections
import logging
import os

from jcrnet import imageio
from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DimensionError

logger = logging.getLogger(__name__)

LOW_DIR = "low"
HIGH_DIR = "high"

ImagePair = collections.namedtuple("ImagePair", ["name", "low", "high"])


def _image_names(folder):
    if not os.path.isdir(folder):
        raise ConfigurationError(f"Dataset folder {folder} does not exist")

    return {
        filename
        for filename in os.listdir(folder)
        if filename.lower().endswith(imageio.IMAGE_EXTENSIONS)
    }


def pair_names(root):
    """Sorted paired names and the sorted list of files with no partner,
    each given relative to ``root``."""
    low = _image_names(os.path.join(root, LOW_DIR))
    high = _image_names(os.path.join(root, HIGH_DIR))

    unpaired = [os.path.join(LOW_DIR, name) for name in sorted(low - high)]
    unpaired += [os.path.join(HIGH_DIR, name) for name in sorted(high - low)]
    return sorted(low & high), unpaired


def load_pairs(root):
    names, unpaired = pair_names(root)
    for path in unpaired:
        logger.warning("Unpaired image %s in %s", path, root)

    pairs = []
    for name in names:
        low = imageio.load_image(os.path.join(root, LOW_DIR, name))
        high = imageio.load_image(os.path.join(root, HIGH_DIR, name))
        if low.pixels.shape != high.pixels.shape:
            raise DimensionError(
                f"Pair {name} differs in size: {low.pixels.shape} and {high.pixels.shape}"
            )
        pairs.append(ImagePair(name, low, high))

    logger.info("Loaded %s image pairs from %s", len(pairs), root)
    return pairs


def usable_pairs(pairs, patch):
    usable = []
    for pair in pairs:
        if pair.low.height < patch or pair.low.width < patch:
            logger.warning(
                "Skipping %s: %sx%s is smaller than the %s patch",
                pair.name,
                pair.low.width,
                pair.low.height,
                patch,
            )
            continue
        usable.append(pair)

    if not usable:
        raise ConfigurationError(f"No image pair is at least {patch}x{patch}")

    return usable
