"""Tile processors: the pluggable contract plus desk-scale implementations.

A processor declares (scale, receptive_field) up front; the tiling engine
relies on that descriptor to size padding. All convolutions here use zero
borders and direct (non-FFT) arithmetic so tiled and whole-image runs can
be compared bit for bit.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ChannelMismatch, ChecksumError, FormatError, ShapeError
from .imagecore import ImageBuffer, _Raster

__all__ = [
    "ProcessorDescriptor",
    "TileProcessor",
    "ConvKernel",
    "BorderMode",
    "conv2d",
    "conv2d_apply",
    "nearest_upsample",
    "IdentityProcessor",
    "GainProcessor",
    "NearestUpscaler",
    "ConvProcessor",
    "CnnProcessor",
    "Activation",
    "ConvLayer",
    "CnnWeights",
    "cnn_forward",
    "save_weights",
    "load_weights",
]


@dataclass(frozen=True)
class ProcessorDescriptor:
    """What the tiling engine needs to know about a processor.

    scale is the output/input spatial ratio; receptive_field is the input
    radius (in pixels) that can influence one output pixel. Padding is
    sufficient for seam-free tiling exactly when receptive_field fits
    inside it.
    """

    name: str
    scale: int = 1
    receptive_field: int = 0

    def __post_init__(self):
        if self.scale < 1:
            raise ShapeError(f"scale must be >= 1, got {self.scale}")
        if self.receptive_field < 0:
            raise ShapeError(f"receptive_field must be >= 0, got {self.receptive_field}")


@runtime_checkable
class TileProcessor(Protocol):
    descriptor: ProcessorDescriptor

    def process(self, tile: np.ndarray) -> np.ndarray:
        """Pure function of the tile; output dims = input dims * scale."""
        ...


class BorderMode(Enum):
    ZERO = "zero"


@dataclass(frozen=True)
class ConvKernel:
    """Depthwise 2D kernel of odd size (2*radius+1) applied per channel."""

    radius: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float32)
        side = 2 * self.radius + 1
        if self.radius < 0 or w.shape != (side, side):
            raise ShapeError(f"kernel weights must be {side}x{side}, got {w.shape}")
        if not np.isfinite(w).all():
            raise ShapeError("kernel weights must be finite")
        object.__setattr__(self, "weights", w)

    @classmethod
    def delta(cls, radius: int = 0) -> "ConvKernel":
        w = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=np.float32)
        w[radius, radius] = 1.0
        return cls(radius, w)

    @classmethod
    def box(cls, radius: int) -> "ConvKernel":
        side = 2 * radius + 1
        return cls(radius, np.full((side, side), 1.0 / side**2, dtype=np.float32))

    @classmethod
    def gaussian(cls, radius: int, sigma: float) -> "ConvKernel":
        ax = np.arange(-radius, radius + 1, dtype=np.float64)
        g = np.exp(-(ax**2) / (2.0 * sigma**2))
        k = np.outer(g, g)
        return cls(radius, (k / k.sum()).astype(np.float32))


def _shift_slices(delta: int, extent: int) -> tuple[slice, slice]:
    # out[i] += w * in[i + delta]; returns (dst, src) slices for one axis
    dst = slice(max(0, -delta), extent - max(0, delta))
    src = slice(max(0, delta), extent - max(0, -delta))
    return dst, src


def conv2d(arr: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Direct cross-correlation with zero border, all channels alike.

    Accumulation order over kernel taps is fixed, so applying this to a
    correctly padded tile reproduces the whole-image result bit for bit.
    """
    kernel = np.asarray(kernel)
    r = kernel.shape[0] // 2
    h, w = arr.shape[:2]
    out = np.zeros_like(arr)
    for dy in range(-r, r + 1):
        ydst, ysrc = _shift_slices(dy, h)
        for dx in range(-r, r + 1):
            kw = kernel[dy + r, dx + r]
            if kw == 0.0:
                continue
            xdst, xsrc = _shift_slices(dx, w)
            out[ydst, xdst] += kw * arr[ysrc, xsrc]
    return out


def conv2d_apply(img: _Raster, kernel: ConvKernel, border: BorderMode = BorderMode.ZERO):
    """Whole-buffer convolution; the reference both oracles and tiles share."""
    if border is not BorderMode.ZERO:
        raise ShapeError(f"unsupported border mode {border}")
    return type(img)(conv2d(img.data, kernel.weights))


def nearest_upsample(arr: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return arr.copy()
    return np.repeat(np.repeat(arr, factor, axis=0), factor, axis=1)


# ---------------------------------------------------------------------------
# concrete processors

class IdentityProcessor:
    def __init__(self):
        self.descriptor = ProcessorDescriptor("identity")

    def process(self, tile: np.ndarray) -> np.ndarray:
        return tile.copy()


class GainProcessor:
    """Pixelwise multiply; receptive field zero, so even unpadded tiling is exact."""

    def __init__(self, gain: float):
        self.gain = float(gain)
        self.descriptor = ProcessorDescriptor(f"gain{gain:g}")

    def process(self, tile: np.ndarray) -> np.ndarray:
        return tile * np.asarray(self.gain, dtype=tile.dtype)


class NearestUpscaler:
    def __init__(self, factor: int):
        self.descriptor = ProcessorDescriptor(f"nearest{factor}x", scale=factor)

    def process(self, tile: np.ndarray) -> np.ndarray:
        return nearest_upsample(tile, self.descriptor.scale)


class ConvProcessor:
    """Single depthwise convolution, zero border; the workhorse oracle processor."""

    def __init__(self, kernel: ConvKernel, name: str | None = None):
        self.kernel = kernel
        self.descriptor = ProcessorDescriptor(
            name or f"conv_r{kernel.radius}", receptive_field=kernel.radius
        )

    def process(self, tile: np.ndarray) -> np.ndarray:
        return conv2d(tile, self.kernel.weights)


# ---------------------------------------------------------------------------
# small CNNs with declared receptive fields

class Activation(Enum):
    RELU = "relu"
    IDENTITY = "identity"


@dataclass
class ConvLayer:
    """One 3x3 convolution, weights shaped (3, 3, in_ch, out_ch)."""

    in_ch: int
    out_ch: int
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.RELU

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.shape != (3, 3, self.in_ch, self.out_ch):
            raise ShapeError(
                f"layer weights must be (3, 3, {self.in_ch}, {self.out_ch}), got {w.shape}"
            )
        if b.shape != (self.out_ch,):
            raise ShapeError(f"layer bias must be ({self.out_ch},), got {b.shape}")
        self.weights = w
        self.bias = b


@dataclass
class CnnWeights:
    """A chain of 3x3 conv layers plus the receptive field they declare."""

    layers: list[ConvLayer]
    scale: int = 1
    receptive_field: int = -1
    residual: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("CnnWeights needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_ch != nxt.in_ch:
                raise ShapeError(
                    f"layer chain broken: {prev.out_ch} output channels feed "
                    f"{nxt.in_ch} input channels"
                )
        if self.receptive_field < 0:
            self.receptive_field = len(self.layers)
        elif self.receptive_field != len(self.layers):
            raise ShapeError(
                f"declared receptive field {self.receptive_field} does not match "
                f"{len(self.layers)} radius-1 layers"
            )

    @property
    def in_ch(self) -> int:
        return self.layers[0].in_ch

    @property
    def out_ch(self) -> int:
        return self.layers[-1].out_ch

    def parameter_count(self) -> int:
        return sum(layer.weights.size + layer.bias.size for layer in self.layers)


def conv3x3(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 multichannel conv, zero border: (H,W,Ci) x (3,3,Ci,Co) -> (H,W,Co)."""
    h, w = x.shape[:2]
    out = np.broadcast_to(bias, (h, w, bias.shape[0])).copy()
    for dy in (-1, 0, 1):
        ydst, ysrc = _shift_slices(dy, h)
        for dx in (-1, 0, 1):
            xdst, xsrc = _shift_slices(dx, w)
            out[ydst, xdst] += x[ysrc, xsrc] @ weights[dy + 1, dx + 1]
    return out


def cnn_forward(x: np.ndarray, weights: CnnWeights) -> np.ndarray:
    """Run the conv chain. Output dtype follows numpy promotion with the weights."""
    if x.ndim != 3 or x.shape[2] != weights.in_ch:
        raise ShapeError(
            f"input must be (H, W, {weights.in_ch}), got {getattr(x, 'shape', None)}"
        )
    h = x
    for layer in weights.layers:
        h = conv3x3(h, layer.weights, layer.bias)
        if layer.activation is Activation.RELU:
            h = np.maximum(h, 0.0)
    return h


class CnnProcessor:
    """Tile processor backed by CnnWeights.

    scale > 1 means nearest-neighbor expansion before the conv chain; the
    declared input-space receptive field then shrinks accordingly.
    """

    def __init__(self, weights: CnnWeights, name: str = "cnn"):
        self.weights = weights
        rf_out = weights.receptive_field
        rf_in = -(-rf_out // weights.scale)  # ceil division
        self.descriptor = ProcessorDescriptor(name, scale=weights.scale, receptive_field=rf_in)

    def process(self, tile: np.ndarray) -> np.ndarray:
        if tile.shape[2] != self.weights.in_ch:
            raise ChannelMismatch(
                f"{self.descriptor.name} expects {self.weights.in_ch} channels, got {tile.shape[2]}"
            )
        x = nearest_upsample(tile, self.weights.scale)
        y = cnn_forward(x, self.weights)
        if self.weights.residual:
            if y.shape != x.shape:
                raise ShapeError("residual CNN must preserve channel count")
            y = x + y
        return y.astype(tile.dtype, copy=False)


# ---------------------------------------------------------------------------
# weights file format: u32-LE header length, UTF-8 JSON header, then raw
# little-endian f32 arrays (weights then bias per layer, declaration order)

_FORMAT_TAG = "tilekit-cnn/1"


def _payload_bytes(weights: CnnWeights) -> bytes:
    chunks = []
    for layer in weights.layers:
        chunks.append(layer.weights.astype("<f4").tobytes())
        chunks.append(layer.bias.astype("<f4").tobytes())
    return b"".join(chunks)


def save_weights(weights: CnnWeights, path) -> None:
    payload = _payload_bytes(weights)
    header = {
        "format": _FORMAT_TAG,
        "scale": weights.scale,
        "receptive_field": weights.receptive_field,
        "residual": weights.residual,
        "layers": [
            {"in_ch": l.in_ch, "out_ch": l.out_ch, "kernel": 3, "activation": l.activation.value}
            for l in weights.layers
        ],
        "crc32": zlib.crc32(payload),
    }
    header.update(weights.extra)
    blob = json.dumps(header).encode("utf-8")
    with open(Path(path), "wb") as fh:
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        fh.write(payload)


def load_weights(path) -> CnnWeights:
    """Parse and validate a weights file.

    FormatError for truncation/bad encoding, ChecksumError for payload
    corruption, ShapeError when declared shapes do not chain.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for a header")
    hlen = int.from_bytes(raw[:4], "little")
    if len(raw) < 4 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[4 : 4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: undecodable header") from exc
    if header.get("format") != _FORMAT_TAG:
        raise FormatError(f"{path}: unknown format tag {header.get('format')!r}")

    payload = raw[4 + hlen :]
    expected = sum(
        9 * spec["in_ch"] * spec["out_ch"] + spec["out_ch"] for spec in header["layers"]
    ) * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    if zlib.crc32(payload) != header.get("crc32"):
        raise ChecksumError(f"{path}: payload checksum mismatch")

    layers = []
    offset = 0
    for spec in header["layers"]:
        ci, co = spec["in_ch"], spec["out_ch"]
        wn = 9 * ci * co
        w = np.frombuffer(payload, dtype="<f4", count=wn, offset=offset).reshape(3, 3, ci, co)
        offset += wn * 4
        b = np.frombuffer(payload, dtype="<f4", count=co, offset=offset)
        offset += co * 4
        layers.append(ConvLayer(ci, co, w.astype(np.float64), b.astype(np.float64),
                                Activation(spec["activation"])))
    known = {"format", "scale", "receptive_field", "residual", "layers", "crc32"}
    extra = {k: v for k, v in header.items() if k not in known}
    return CnnWeights(
        layers,
        scale=int(header.get("scale", 1)),
        receptive_field=int(header["receptive_field"]),
        residual=bool(header.get("residual", False)),
        extra=extra,
    )
