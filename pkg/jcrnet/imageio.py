# -*- coding: utf-8 -*-

import logging
import os

import numpy as np
import png

from jcrnet.exceptions import DimensionError
from jcrnet.exceptions import FormatError

logger = logging.getLogger(__name__)

PPM_EXTENSIONS = (".ppm",)
PNG_EXTENSIONS = (".png",)
IMAGE_EXTENSIONS = PPM_EXTENSIONS + PNG_EXTENSIONS

_WHITESPACE = b" \t\r\n"


class ImageBuffer:
    def __init__(self, pixels, color_space="srgb", source_depth=8):
        pixels = np.asarray(pixels, dtype=np.float32)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise DimensionError(f"Images are H x W x 3, got {pixels.shape}")

        self.pixels = pixels
        self.color_space = color_space
        self.source_depth = source_depth

    @classmethod
    def from_bytes(cls, data, height, width):
        levels = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
        return cls(levels.astype(np.float32) / 255.0)

    @classmethod
    def from_path(cls, path):
        return load_image(path)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def to_bytes(self):
        return quantize(self.pixels).tobytes()

    def crop(self, top, left, size):
        return ImageBuffer(
            self.pixels[top : top + size, left : left + size], self.color_space
        )

    def __eq__(self, other):
        return isinstance(other, ImageBuffer) and np.array_equal(
            self.pixels, other.pixels
        )

    def __repr__(self):
        return f"<ImageBuffer {self.width}x{self.height} {self.color_space}/{self.source_depth}-bit>"


def quantize(pixels):
    """Round half up to 8-bit levels, clamping out-of-range values."""
    levels = np.floor(np.asarray(pixels, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(levels, 0, 255).astype(np.uint8)


def _header_token(data, offset):
    while offset < len(data):
        if data[offset : offset + 1] == b"#":
            newline = data.find(b"\n", offset)
            offset = len(data) if newline < 0 else newline + 1
        elif data[offset] in _WHITESPACE:
            offset += 1
        else:
            break

    start = offset
    while offset < len(data) and data[offset] not in _WHITESPACE:
        offset += 1

    if start == offset:
        raise FormatError(f"PPM header ends early at byte {start}")

    return data[start:offset], start, offset


def _header_int(data, offset, field):
    token, start, offset = _header_token(data, offset)
    try:
        value = int(token)
    except ValueError:
        raise FormatError(f"PPM {field} is not a number at byte {start}: {token!r}")

    if value <= 0:
        raise FormatError(f"PPM {field} must be positive at byte {start}")

    return value, start, offset


def decode_ppm(data):
    magic, _, offset = _header_token(data, 0)
    if magic != b"P6":
        raise FormatError(f"Not a binary PPM (P6) file at byte 0: {magic!r}")

    width, _, offset = _header_int(data, offset, "width")
    height, _, offset = _header_int(data, offset, "height")
    maxval, start, offset = _header_int(data, offset, "maxval")
    if maxval != 255:
        raise FormatError(f"Unsupported PPM depth (maxval {maxval}) at byte {start}")

    if offset >= len(data) or data[offset] not in _WHITESPACE:
        raise FormatError(f"PPM header is not terminated at byte {offset}")

    payload = data[offset + 1 :]
    expected = width * height * 3
    if len(payload) < expected:
        raise FormatError(
            f"Truncated PPM payload at byte {offset + 1}: "
            f"expected {expected} bytes, got {len(payload)}"
        )

    return ImageBuffer.from_bytes(payload[:expected], height, width)


def encode_ppm(image):
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.to_bytes()


def decode_png(data):
    try:
        width, height, rows, info = png.Reader(bytes=data).read()
        rows = [np.asarray(row, dtype=np.uint8) for row in rows]
    except (png.Error, ValueError) as error:
        raise FormatError(f"Malformed PNG: {error}")

    if (
        info.get("bitdepth") != 8
        or info.get("greyscale")
        or info.get("alpha")
        or info.get("palette")
        or info.get("interlace")
    ):
        raise FormatError(f"Only 8-bit non-interlaced RGB PNG is supported, got {info}")

    return ImageBuffer.from_bytes(np.vstack(rows).tobytes(), height, width)


def encode_png(image, out):
    writer = png.Writer(image.width, image.height, greyscale=False, bitdepth=8)
    writer.write(out, quantize(image.pixels).reshape(image.height, image.width * 3))


def _extension(path):
    extension = os.path.splitext(str(path))[1].lower()
    if extension not in IMAGE_EXTENSIONS:
        raise FormatError(f"Unsupported image extension: {path}")
    return extension


def load_image(path):
    extension = _extension(path)
    with open(path, "rb") as f:
        data = f.read()

    try:
        if extension in PPM_EXTENSIONS:
            return decode_ppm(data)
        return decode_png(data)
    except FormatError as error:
        raise FormatError(f"{path}: {error}")


def save_image(image, path):
    extension = _extension(path)
    with open(path, "wb") as f:
        if extension in PPM_EXTENSIONS:
            f.write(encode_ppm(image))
        else:
            encode_png(image, f)

    logger.debug("Wrote %s to %s", image, path)
