# -*- coding: utf-8 -*-
"""Full-reference image quality metrics on [0, 1] images."""

import logging
import math

import numpy as np
from skimage.metrics import structural_similarity

from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DimensionError

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5

LUMA = (0.299, 0.587, 0.114)


def _pixels(image):
    return np.asarray(getattr(image, "pixels", image), dtype=np.float64)


def _check_pair(x, gt):
    if x.shape != gt.shape:
        raise DimensionError(f"Images differ in shape: {x.shape} and {gt.shape}")


def psnr(x, gt, peak=1.0):
    """PSNR in dB; identical images give ``math.inf``.

    With ``peak=255`` both images are first quantised to 8-bit levels the
    way :func:`jcrnet.imageio.save_image` writes them.
    """
    a, b = _pixels(x), _pixels(gt)
    _check_pair(a, b)
    if peak != 1.0:
        a, b = np.floor(a * peak + 0.5), np.floor(b * peak + 0.5)
    diff = a - b
    mse = float(np.mean(diff * diff))
    if mse == 0:
        return math.inf
    return 10 * math.log10(peak * peak / mse)


def luma(pixels):
    if pixels.ndim == 2:
        return pixels
    return pixels @ np.asarray(LUMA)


def ssim_map(x, gt):
    """Local SSIM over every fully contained 11x11 window of the luma."""
    a, b = luma(_pixels(x)), luma(_pixels(gt))
    _check_pair(a, b)
    if min(a.shape) < SSIM_WINDOW:
        raise ConfigurationError(
            f"Images of {a.shape} are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )

    _, full = structural_similarity(
        a,
        b,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        data_range=1.0,
        full=True,
    )
    # border windows hang over the reflected edge
    margin = SSIM_WINDOW // 2
    return full[margin:-margin, margin:-margin]


def ssim(x, gt):
    return float(np.mean(ssim_map(x, gt)))


class MetricReport:
    def __init__(self, peak=1.0):
        self.peak = peak
        self.rows = []

    def add(self, name, x, gt):
        row = (name, psnr(x, gt, self.peak), ssim(x, gt))
        logger.debug("Metrics for %s: PSNR %s dB, SSIM %s", *row)
        self.rows.append(row)
        return row

    @property
    def mean_psnr(self):
        return _mean([row[1] for row in self.rows])

    @property
    def mean_ssim(self):
        return _mean([row[2] for row in self.rows])

    def as_table(self):
        width = max([len("image")] + [len(row[0]) for row in self.rows])
        lines = [f"{'image':<{width}}  {'psnr_db':>10}  {'ssim':>8}"]
        for name, value, structure in self.rows:
            lines.append(f"{name:<{width}}  {format_value(value):>10}  {structure:>8.4f}")
        lines.append(
            f"{'mean':<{width}}  {format_value(self.mean_psnr):>10}  {self.mean_ssim:>8.4f}"
        )
        return "\n".join(lines) + "\n"

    def as_key_values(self):
        lines = [f"peak={format_value(self.peak)}", f"count={len(self.rows)}"]
        for name, value, structure in self.rows:
            lines.append(f"image.{name}.psnr={format_value(value)}")
            lines.append(f"image.{name}.ssim={structure:.6f}")
        lines.append(f"mean.psnr={format_value(self.mean_psnr)}")
        lines.append(f"mean.ssim={self.mean_ssim:.6f}")
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return f"<MetricReport {len(self.rows)} images, mean PSNR {format_value(self.mean_psnr)}>"


def _mean(values):
    if not values:
        return math.nan
    return sum(values) / len(values)


def format_value(value):
    if math.isinf(value):
        return "inf"
    return f"{value:.3f}"
