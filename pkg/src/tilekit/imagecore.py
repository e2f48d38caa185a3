"""Raster buffers, geometry, resampling, and image file I/O.

Everything downstream works on the single canonical layout defined here:
row-major (height, width, channels) float arrays. Images are nominally in
[0, 1]; latents are unbounded but finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ChannelMismatch, FormatError, InvalidDimension, OutOfBounds, ShapeError

__all__ = [
    "ImageBuffer",
    "LatentGrid",
    "Rect",
    "ResampleFilter",
    "load_image",
    "save_image",
    "resample",
    "crop",
    "place",
]


def _coerce(data, name: str) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim != 3:
        raise ShapeError(f"{name} expects a (height, width, channels) array, got shape {arr.shape}")
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidDimension(f"{name} spatial dims must be >= 1, got {arr.shape[:2]}")
    if not np.isfinite(arr).all():
        raise ShapeError(f"{name} contains non-finite values")
    return arr


class _Raster:
    """Shared behaviour of ImageBuffer and LatentGrid."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = _coerce(data, type(self).__name__)
        self._check_channels(arr.shape[2])
        self.data = arr

    @staticmethod
    def _check_channels(channels: int) -> None:
        if channels < 1:
            raise ChannelMismatch("need at least one channel")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def copy(self):
        return type(self)(self.data.copy())

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.height}x{self.width}x{self.channels}, {self.data.dtype})"


class ImageBuffer(_Raster):
    """Pixel-space raster, 1 to 4 channels, values nominally in [0, 1]."""

    @staticmethod
    def _check_channels(channels: int) -> None:
        if not 1 <= channels <= 4:
            raise ChannelMismatch(f"ImageBuffer supports 1-4 channels, got {channels}")


class LatentGrid(_Raster):
    """Latent-space tensor, typically 4 channels, values unbounded but finite."""


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise OutOfBounds(f"rect origin must be non-negative, got ({self.x}, {self.y})")
        if self.w < 1 or self.h < 1:
            raise InvalidDimension(f"rect extents must be >= 1, got ({self.w}, {self.h})")


class ResampleFilter(Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"
    LANCZOS3 = "lanczos3"


# ---------------------------------------------------------------------------
# file I/O

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def load_image(path) -> ImageBuffer:
    """Read an 8-bit PNG or binary PPM (P6) into a float buffer in [0, 1].

    Raises OSError for missing/unreadable files and FormatError for
    unsupported encodings.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P6":
        return _load_ppm(path)
    return _load_png(path)


def _load_png(path: Path) -> ImageBuffer:
    with open(path, "rb") as fh:
        if fh.read(8) != _PNG_MAGIC:
            raise FormatError(f"{path}: not a PNG or binary PPM file")
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB", "RGBA"):
                if im.mode in ("P", "LA", "1"):
                    raise FormatError(f"{path}: unsupported PNG mode {im.mode}")
                if im.mode.startswith("I") or im.mode == "F":
                    raise FormatError(f"{path}: only 8-bit PNG is supported (mode {im.mode})")
                raise FormatError(f"{path}: unsupported PNG mode {im.mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: undecodable PNG stream") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return ImageBuffer(arr.astype(np.float32) / 255.0)


def _load_ppm(path: Path) -> ImageBuffer:
    data = path.read_bytes()
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        return data[start:pos]

    if token() != b"P6":
        raise FormatError(f"{path}: not a binary PPM (P6) file")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PPM header") from exc
    if width < 1 or height < 1:
        raise FormatError(f"{path}: invalid PPM dimensions {width}x{height}")
    if not 0 < maxval < 256:
        raise FormatError(f"{path}: only 8-bit PPM supported, maxval={maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise FormatError(f"{path}: PPM payload truncated ({len(raw)} of {need} bytes)")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return ImageBuffer(arr.astype(np.float32) / float(maxval))


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """[0,1] floats to bytes with the round-half-up rule q = floor(v*255 + 0.5)."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def save_image(img: ImageBuffer, path) -> None:
    """Write an 8-bit PNG. Values are clamped to [0, 1] and rounded half-up."""
    if img.channels not in (1, 3, 4):
        raise ChannelMismatch(f"PNG write supports 1, 3, or 4 channels, got {img.channels}")
    q = quantize_u8(img.data)
    mode = {1: "L", 3: "RGB", 4: "RGBA"}[img.channels]
    pil = Image.fromarray(q[:, :, 0] if img.channels == 1 else q, mode=mode)
    pil.save(Path(path), format="PNG")


# ---------------------------------------------------------------------------
# resampling

def _lanczos3(x: np.ndarray) -> np.ndarray:
    # a=3 lobes; separable sinc window
    out = np.zeros_like(x)
    inside = np.abs(x) < 3.0
    xi = np.where(inside, x, 1.0)
    out = np.where(inside, np.sinc(xi) * np.sinc(xi / 3.0), 0.0)
    return out


def _cubic(x: np.ndarray) -> np.ndarray:
    # Catmull-Rom (a = -0.5), the common photographic bicubic
    a = -0.5
    ax = np.abs(x)
    out = np.zeros_like(ax)
    m1 = ax <= 1.0
    m2 = (ax > 1.0) & (ax < 2.0)
    out[m1] = (a + 2) * ax[m1] ** 3 - (a + 3) * ax[m1] ** 2 + 1
    out[m2] = a * ax[m2] ** 3 - 5 * a * ax[m2] ** 2 + 8 * a * ax[m2] - 4 * a
    return out


def _linear(x: np.ndarray) -> np.ndarray:
    return np.clip(1.0 - np.abs(x), 0.0, None)


_FILTERS = {
    ResampleFilter.BILINEAR: (1.0, _linear),
    ResampleFilter.BICUBIC: (2.0, _cubic),
    ResampleFilter.LANCZOS3: (3.0, _lanczos3),
}


def _resample_axis(arr: np.ndarray, out_len: int, axis: int, filt: ResampleFilter) -> np.ndarray:
    in_len = arr.shape[axis]
    scale = in_len / out_len

    if filt is ResampleFilter.NEAREST:
        centers = (np.arange(out_len) + 0.5) * scale
        idx = np.clip(np.floor(centers).astype(np.int64), 0, in_len - 1)
        return np.take(arr, idx, axis=axis)

    radius, kernel = _FILTERS[filt]
    # When downsampling the kernel is stretched by the scale factor so each
    # output sample still sees the full input footprint.
    fscale = max(scale, 1.0)
    support = radius * fscale
    centers = (np.arange(out_len) + 0.5) * scale - 0.5
    ntaps = int(math.ceil(2.0 * support)) + 1
    first = np.ceil(centers - support).astype(np.int64)
    taps = first[:, None] + np.arange(ntaps)[None, :]
    weights = kernel((taps - centers[:, None]) / fscale)
    weights /= weights.sum(axis=1, keepdims=True)
    taps = np.clip(taps, 0, in_len - 1)  # clamp-to-edge

    moved = np.moveaxis(arr, axis, 0).astype(np.float64)
    out = np.zeros((out_len,) + moved.shape[1:], dtype=np.float64)
    for t in range(ntaps):
        w = weights[:, t].reshape((out_len,) + (1,) * (moved.ndim - 1))
        out += w * moved[taps[:, t]]
    return np.moveaxis(out, 0, axis).astype(arr.dtype)


def resample_array(arr: np.ndarray, out_w: int, out_h: int, filt: ResampleFilter) -> np.ndarray:
    """resample() for bare (H, W, C) arrays; same kernels and edge handling."""
    if out_w < 1 or out_h < 1:
        raise InvalidDimension(f"target size must be >= 1, got {out_w}x{out_h}")
    data = arr
    if out_h != arr.shape[0]:
        data = _resample_axis(data, out_h, 0, filt)
    if out_w != arr.shape[1]:
        data = _resample_axis(data, out_w, 1, filt)
    if data is arr:  # same-size request: all kernels here interpolate exactly
        data = data.copy()
    return data


def resample(img: ImageBuffer, out_w: int, out_h: int, filt: ResampleFilter) -> ImageBuffer:
    """Separable resize with edge-clamped sampling.

    Kernels are normalized per output pixel, so constant images are
    preserved for every filter.
    """
    return ImageBuffer(resample_array(img.data, out_w, out_h, filt))


# ---------------------------------------------------------------------------
# exact geometry

def crop(img: _Raster, r: Rect):
    """Exact sub-buffer copy; the rect must lie fully inside the source."""
    if r.x + r.w > img.width or r.y + r.h > img.height:
        raise OutOfBounds(
            f"crop rect {r} exceeds source {img.width}x{img.height}"
        )
    return type(img)(img.data[r.y : r.y + r.h, r.x : r.x + r.w].copy())


def place(dst: _Raster, src: _Raster, x: int, y: int) -> None:
    """Copy src into dst at (x, y) without resampling. Mutates dst."""
    if x < 0 or y < 0 or x + src.width > dst.width or y + src.height > dst.height:
        raise OutOfBounds(
            f"placement at ({x}, {y}) of {src.width}x{src.height} exceeds "
            f"destination {dst.width}x{dst.height}"
        )
    if src.channels != dst.channels:
        raise ChannelMismatch(f"channel mismatch: {src.channels} vs {dst.channels}")
    dst.data[y : y + src.height, x : x + src.width] = src.data
