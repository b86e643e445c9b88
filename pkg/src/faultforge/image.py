"""8-bit RGB raster plus PNG and raw ``.rgb`` I/O."""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DecodeError, UnsupportedSize

MIN_SIDE = 8
DEFAULT_SIZE = 224


class ImageBuffer:
    """Row-major RGB raster backed by a read-only ``(height, width, 3)`` uint8 array."""

    __slots__ = ("_px",)

    def __init__(self, pixels):
        px = np.array(pixels, dtype=np.uint8, copy=True)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (height, width, 3) pixels, got shape {px.shape}")
        px.setflags(write=False)
        self._px = px

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "ImageBuffer":
        if len(data) != width * height * 3:
            raise ValueError(f"expected {width * height * 3} bytes, got {len(data)}")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3))

    @classmethod
    def filled(cls, width: int, height: int, rgb) -> "ImageBuffer":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:] = rgb
        return cls(px)

    @property
    def pixels(self) -> np.ndarray:
        return self._px

    @property
    def width(self) -> int:
        return self._px.shape[1]

    @property
    def height(self) -> int:
        return self._px.shape[0]

    def to_bytes(self) -> bytes:
        return self._px.tobytes()

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self._px.shape == other._px.shape and np.array_equal(self._px, other._px)

    def __hash__(self):
        return hash((self._px.shape, self._px.tobytes()))

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height})"


def check_size(image: ImageBuffer) -> None:
    if image.width < MIN_SIDE or image.height < MIN_SIDE:
        raise UnsupportedSize(f"image {image.width}x{image.height} is below {MIN_SIDE}x{MIN_SIDE}")


def encode_png(image: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> ImageBuffer:
    try:
        with Image.open(io.BytesIO(data)) as im:
            return ImageBuffer(np.asarray(im.convert("RGB")))
    except (OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode image: {exc}") from None


def read_png(path) -> ImageBuffer:
    return decode_png(Path(path).read_bytes())


def write_png(image: ImageBuffer, path) -> None:
    Path(path).write_bytes(encode_png(image))


def encode_raw(image: ImageBuffer) -> bytes:
    """``width u32 LE, height u32 LE`` followed by the pixel bytes."""
    return struct.pack("<II", image.width, image.height) + image.to_bytes()


def decode_raw(data: bytes) -> ImageBuffer:
    if len(data) < 8:
        raise DecodeError("raw image shorter than its 8-byte header")
    width, height = struct.unpack_from("<II", data)
    body = data[8:]
    if len(body) != width * height * 3:
        raise DecodeError(f"raw image body is {len(body)} bytes, expected {width * height * 3}")
    return ImageBuffer.from_bytes(width, height, body)
