"""Adaptive context-preserving tiling: planning, padded extraction, blending.

Strategy selection follows one rule: when both image dimensions divide
evenly by the tile size, tiles are laid out back to back (0% overlap) and
each tile is padded with real pixels from its neighbours; otherwise tiles
overlap slightly and are feather-blended. Either way every output pixel is
covered and the run is deterministic regardless of tile order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InvalidDimension, InvalidRatio, InvalidTileSize, OutOfBounds, ShapeError
from .imagecore import _Raster
from .processors import TileProcessor

__all__ = [
    "AdjacentPadding",
    "SmallOverlap",
    "TilingStrategy",
    "PaddingMode",
    "BlendMode",
    "BlendSpec",
    "TilingPlan",
    "RunStats",
    "default_padding_size",
    "select_strategy",
    "tile_positions",
    "extract_with_adjacent_padding",
    "extract_padded_tile",
    "remove_padding",
    "BlendAccumulator",
    "blend_tiles_to_output",
    "plan_tiling",
    "apply_plan",
    "run_acpt",
]


@dataclass(frozen=True)
class AdjacentPadding:
    """0% overlap; tiles padded with neighbouring image content."""

    padding_size: int

    def __post_init__(self):
        if self.padding_size < 0:
            raise InvalidDimension(f"padding_size must be >= 0, got {self.padding_size}")


@dataclass(frozen=True)
class SmallOverlap:
    """Overlapping raw tiles, no padding; overlap_ratio in [0, 0.5]."""

    overlap_ratio: float

    def __post_init__(self):
        if not 0.0 <= self.overlap_ratio <= 0.5:
            raise InvalidRatio(f"overlap_ratio must be in [0, 0.5], got {self.overlap_ratio}")


TilingStrategy = Union[AdjacentPadding, SmallOverlap]


class PaddingMode(Enum):
    ZERO = "zero"
    REFLECT = "reflect"
    ADJACENT = "adjacent"


class BlendMode(Enum):
    LINEAR_FEATHER = "linear_feather"
    AVERAGE = "average"


@dataclass(frozen=True)
class BlendSpec:
    mode: BlendMode = BlendMode.LINEAR_FEATHER


def default_padding_size(tile_size: int) -> int:
    """6% of the tile, rounded to the nearest even pixel count (512 -> 32)."""
    p = round(0.06 * tile_size)
    return p + (p & 1)


def select_strategy(
    width: int,
    height: int,
    tile_size: int,
    default_overlap: float = 0.25,
    default_padding: int | None = None,
) -> TilingStrategy:
    """Pick adjacent padding when both extents divide evenly, else small overlap."""
    if tile_size < 1 or tile_size > min(width, height):
        raise InvalidTileSize(
            f"tile_size {tile_size} invalid for a {width}x{height} image"
        )
    if width % tile_size == 0 and height % tile_size == 0:
        pad = default_padding_size(tile_size) if default_padding is None else default_padding
        return AdjacentPadding(pad)
    return SmallOverlap(default_overlap)


def tile_positions(extent: int, tile_size: int, overlap_ratio: float) -> list[int]:
    """Offsets {0, stride, 2*stride, ...} clipped to [0, extent - tile_size].

    If the stride walk stops short of the far edge, the clamped position
    extent - tile_size is appended so coverage is total.
    """
    if not 0.0 <= overlap_ratio < 1.0:
        raise InvalidRatio(f"overlap_ratio must be in [0, 1), got {overlap_ratio}")
    if tile_size > extent:
        raise InvalidTileSize(f"tile_size {tile_size} exceeds extent {extent}")
    overlap_pixels = int(overlap_ratio * tile_size)
    stride = tile_size - overlap_pixels
    positions = list(range(0, extent - tile_size + 1, stride))
    if positions[-1] + tile_size < extent:
        positions.append(extent - tile_size)
    return positions


@dataclass
class TilingPlan:
    """A concrete layout: strategy, tile size, origins, and source dims."""

    strategy: TilingStrategy
    tile_size: int
    positions: list[tuple[int, int]]
    input_dims: tuple[int, int]  # (width, height)

    @property
    def xs(self) -> list[int]:
        return sorted({p[0] for p in self.positions})

    @property
    def ys(self) -> list[int]:
        return sorted({p[1] for p in self.positions})

    def scaled(self, factor: int) -> "TilingPlan":
        """The same layout in a factor-x output coordinate space."""
        return TilingPlan(
            strategy=self.strategy,
            tile_size=self.tile_size * factor,
            positions=[(x * factor, y * factor) for x, y in self.positions],
            input_dims=(self.input_dims[0] * factor, self.input_dims[1] * factor),
        )

    def to_json(self) -> str:
        if isinstance(self.strategy, AdjacentPadding):
            strat = {"kind": "adjacent_padding", "padding_size": self.strategy.padding_size}
        else:
            strat = {"kind": "small_overlap", "overlap_ratio": self.strategy.overlap_ratio}
        return json.dumps(
            {
                "strategy": strat,
                "tile_size": self.tile_size,
                "positions": [list(p) for p in self.positions],
                "input_dims": list(self.input_dims),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "TilingPlan":
        doc = json.loads(text)
        strat = doc["strategy"]
        if strat["kind"] == "adjacent_padding":
            strategy: TilingStrategy = AdjacentPadding(strat["padding_size"])
        elif strat["kind"] == "small_overlap":
            strategy = SmallOverlap(strat["overlap_ratio"])
        else:
            raise ShapeError(f"unknown strategy kind {strat['kind']!r}")
        return cls(
            strategy=strategy,
            tile_size=doc["tile_size"],
            positions=[tuple(p) for p in doc["positions"]],
            input_dims=tuple(doc["input_dims"]),
        )


def plan_tiling(
    width: int,
    height: int,
    tile_size: int,
    *,
    overlap_ratio: float = 0.25,
    padding_size: int | None = None,
    force: str | None = None,
) -> TilingPlan:
    """Build a TilingPlan, auto-selecting the strategy unless force is given.

    force="adjacent" requires evenly dividing extents; force="overlap" runs
    the small-overlap layout even on aligned extents (the baseline the
    profiler sweeps against).
    """
    if tile_size < 1 or tile_size > min(width, height):
        raise InvalidTileSize(f"tile_size {tile_size} invalid for {width}x{height}")
    if force is None:
        strategy = select_strategy(width, height, tile_size, overlap_ratio, padding_size)
    elif force == "adjacent":
        if width % tile_size or height % tile_size:
            raise InvalidTileSize(
                f"adjacent padding needs extents divisible by {tile_size}, got {width}x{height}"
            )
        pad = default_padding_size(tile_size) if padding_size is None else padding_size
        strategy = AdjacentPadding(pad)
    elif force == "overlap":
        strategy = SmallOverlap(overlap_ratio)
    else:
        raise InvalidRatio(f"force must be None, 'adjacent', or 'overlap', got {force!r}")

    if isinstance(strategy, AdjacentPadding):
        xs = list(range(0, width, tile_size))
        ys = list(range(0, height, tile_size))
    else:
        xs = tile_positions(width, tile_size, strategy.overlap_ratio)
        ys = tile_positions(height, tile_size, strategy.overlap_ratio)
    return TilingPlan(
        strategy=strategy,
        tile_size=tile_size,
        positions=[(x, y) for y in ys for x in xs],
        input_dims=(width, height),
    )


# ---------------------------------------------------------------------------
# padded extraction

def extract_padded_tile(
    img: np.ndarray,
    start_x: int,
    start_y: int,
    tile_size: int,
    padding_size: int,
    mode: PaddingMode = PaddingMode.ADJACENT,
    *,
    border_fill: str = "zero",
) -> np.ndarray:
    """Cut a tile and surround it with a padding band.

    ADJACENT copies each side band (and each corner) from the image when the
    full band exists there; bands with no neighbour keep the base fill.
    border_fill="reflect" swaps the zero base for a reflection of the core,
    which only shows through where adjacent content is unavailable.
    """
    h, w = img.shape[:2]
    t, p = tile_size, padding_size
    if start_x < 0 or start_y < 0 or start_x + t > w or start_y + t > h:
        raise OutOfBounds(
            f"tile at ({start_x}, {start_y}) size {t} exceeds image {w}x{h}"
        )
    core = img[start_y : start_y + t, start_x : start_x + t]
    if p == 0:
        return core.copy()

    if mode is PaddingMode.REFLECT or (mode is PaddingMode.ADJACENT and border_fill == "reflect"):
        if p >= t:
            raise InvalidDimension(f"reflect padding needs padding < tile, got {p} >= {t}")
        padded = np.pad(core, ((p, p), (p, p), (0, 0)), mode="reflect")
    else:
        padded = np.zeros((t + 2 * p, t + 2 * p, img.shape[2]), dtype=img.dtype)
        padded[p : p + t, p : p + t] = core

    if mode is not PaddingMode.ADJACENT:
        return padded

    top_ok = start_y >= p
    left_ok = start_x >= p
    bottom_ok = start_y + t + p <= h
    right_ok = start_x + t + p <= w

    if top_ok:
        padded[0:p, p : p + t] = img[start_y - p : start_y, start_x : start_x + t]
    if bottom_ok:
        padded[p + t :, p : p + t] = img[start_y + t : start_y + t + p, start_x : start_x + t]
    if left_ok:
        padded[p : p + t, 0:p] = img[start_y : start_y + t, start_x - p : start_x]
    if right_ok:
        padded[p : p + t, p + t :] = img[start_y : start_y + t, start_x + t : start_x + t + p]
    # corners come from the diagonal neighbours when both side guards pass
    if top_ok and left_ok:
        padded[0:p, 0:p] = img[start_y - p : start_y, start_x - p : start_x]
    if top_ok and right_ok:
        padded[0:p, p + t :] = img[start_y - p : start_y, start_x + t : start_x + t + p]
    if bottom_ok and left_ok:
        padded[p + t :, 0:p] = img[start_y + t : start_y + t + p, start_x - p : start_x]
    if bottom_ok and right_ok:
        padded[p + t :, p + t :] = img[start_y + t : start_y + t + p, start_x + t : start_x + t + p]
    return padded


def extract_with_adjacent_padding(
    img: np.ndarray, start_x: int, start_y: int, tile_size: int, padding_size: int
) -> np.ndarray:
    """Adjacent-padded extraction with zero fill at image borders."""
    return extract_padded_tile(img, start_x, start_y, tile_size, padding_size,
                               PaddingMode.ADJACENT)


def remove_padding(tile: np.ndarray, padding_size: int, scale: int = 1) -> np.ndarray:
    """Central crop dropping padding_size * scale pixels from every side."""
    m = padding_size * scale
    if m == 0:
        return tile.copy()
    h, w = tile.shape[:2]
    if h <= 2 * m or w <= 2 * m:
        raise InvalidDimension(
            f"cannot remove {m} pixels per side from a {h}x{w} tile"
        )
    return tile[m : h - m, m : w - m].copy()


# ---------------------------------------------------------------------------
# blending

def _feather_profile(tile_size: int, left_overlap: int, right_overlap: int) -> np.ndarray:
    """Per-pixel weights along one axis: ramps over the actual overlap with
    each neighbour, flat 1 in the interior, never zero."""
    w = np.ones(tile_size, dtype=np.float64)
    lo = min(left_overlap, tile_size)
    ro = min(right_overlap, tile_size)
    if lo > 0:
        w[:lo] *= (np.arange(1, lo + 1)) / (lo + 1)
    if ro > 0:
        w[tile_size - ro :] *= (np.arange(ro, 0, -1)) / (ro + 1)
    return w


def _axis_overlaps(positions: Sequence[int], tile_size: int) -> dict[int, tuple[int, int]]:
    out: dict[int, tuple[int, int]] = {}
    for i, pos in enumerate(positions):
        left = max(0, positions[i - 1] + tile_size - pos) if i > 0 else 0
        right = max(0, pos + tile_size - positions[i + 1]) if i + 1 < len(positions) else 0
        out[pos] = (left, right)
    return out


class BlendAccumulator:
    """Weighted accumulator for overlapping tiles.

    Weight profiles depend only on the plan geometry: linear feathering
    ramps from ~0 at a shared edge to 1 past the overlap, and sides without
    a neighbour stay at weight 1, so a lone tile passes through exactly.
    Accumulation runs in float64; finalize() divides by total weight and
    casts back.
    """

    def __init__(self, plan: TilingPlan, spec: BlendSpec, channels: int,
                 scale: int = 1, dtype=np.float32):
        out_plan = plan.scaled(scale) if scale != 1 else plan
        w_out = out_plan.input_dims[0]
        h_out = out_plan.input_dims[1]
        self.plan = out_plan
        self.spec = spec
        self.scale = scale
        self.dtype = dtype
        self.values = np.zeros((h_out, w_out, channels), dtype=np.float64)
        self.weights = np.zeros((h_out, w_out, 1), dtype=np.float64)
        t = out_plan.tile_size
        if spec.mode is BlendMode.AVERAGE:
            flat = np.ones(t, dtype=np.float64)
            self._profiles_x = {x: flat for x in out_plan.xs}
            self._profiles_y = {y: flat for y in out_plan.ys}
        else:
            self._profiles_x = {
                x: _feather_profile(t, *ov) for x, ov in _axis_overlaps(out_plan.xs, t).items()
            }
            self._profiles_y = {
                y: _feather_profile(t, *ov) for y, ov in _axis_overlaps(out_plan.ys, t).items()
            }

    def add(self, tile: np.ndarray, x: int, y: int) -> None:
        """Accumulate a processed tile whose origin is (x, y) in input coords."""
        t = self.plan.tile_size
        ox, oy = x * self.scale, y * self.scale
        if tile.shape[0] != t or tile.shape[1] != t:
            raise ShapeError(f"expected a {t}x{t} tile, got {tile.shape[:2]}")
        if ox < 0 or oy < 0 or ox + t > self.values.shape[1] or oy + t > self.values.shape[0]:
            raise OutOfBounds(f"tile at ({ox}, {oy}) exceeds output {self.values.shape[:2]}")
        try:
            w2d = self._profiles_y[oy][:, None] * self._profiles_x[ox][None, :]
        except KeyError:
            raise OutOfBounds(f"position ({ox}, {oy}) is not part of the plan") from None
        self.values[oy : oy + t, ox : ox + t] += tile * w2d[:, :, None]
        self.weights[oy : oy + t, ox : ox + t, 0] += w2d

    def finalize(self) -> np.ndarray:
        if (self.weights == 0.0).any():
            raise ShapeError("some output pixels received no tile coverage")
        return (self.values / self.weights).astype(self.dtype)


def blend_tiles_to_output(acc: BlendAccumulator, tile: np.ndarray, x: int, y: int,
                          spec: BlendSpec | None = None) -> None:
    """Accumulate one tile; the blend mode was fixed when acc was built."""
    if spec is not None and spec.mode is not acc.spec.mode:
        raise ShapeError("blend spec does not match the accumulator")
    acc.add(tile, x, y)


# ---------------------------------------------------------------------------
# the engine

@dataclass
class RunStats:
    """Per-run accounting the profiler consumes."""

    tiles_count: int = 0
    pixels_processed: int = 0
    peak_bytes: int = 0
    strategy: str = ""


def apply_plan(
    img: np.ndarray,
    proc: TileProcessor,
    plan: TilingPlan,
    blend: BlendSpec = BlendSpec(),
    *,
    padding_mode: PaddingMode = PaddingMode.ADJACENT,
    border_fill: str = "zero",
    tile_order: Iterable[int] | None = None,
) -> tuple[np.ndarray, RunStats]:
    """Run a processor over every tile of a plan and reassemble the output.

    Adjacent-padding plans write disjoint core regions; overlap plans go
    through the BlendAccumulator. tile_order only changes the visit order,
    never the result.
    """
    h, w = img.shape[:2]
    if plan.input_dims != (w, h):
        raise ShapeError(f"plan is for {plan.input_dims}, image is {(w, h)}")
    s = proc.descriptor.scale
    t = plan.tile_size
    order = list(tile_order) if tile_order is not None else range(len(plan.positions))
    stats = RunStats()

    if isinstance(plan.strategy, AdjacentPadding):
        pad = plan.strategy.padding_size
        stats.strategy = "adjacent_padding"
        out: np.ndarray | None = None
        transient_peak = 0
        for idx in order:
            x, y = plan.positions[idx]
            padded = extract_padded_tile(img, x, y, t, pad, padding_mode,
                                         border_fill=border_fill)
            processed = proc.process(padded)
            want = (t + 2 * pad) * s
            if processed.shape[0] != want or processed.shape[1] != want:
                raise ShapeError(
                    f"{proc.descriptor.name} returned {processed.shape[:2]}, "
                    f"expected {(want, want)}"
                )
            core = remove_padding(processed, pad, s)
            if out is None:
                out = np.zeros((h * s, w * s, processed.shape[2]), dtype=img.dtype)
            out[y * s : (y + t) * s, x * s : (x + t) * s] = core
            stats.tiles_count += 1
            stats.pixels_processed += padded.shape[0] * padded.shape[1]
            transient_peak = max(transient_peak, padded.nbytes + processed.nbytes + core.nbytes)
        assert out is not None
        stats.peak_bytes = out.nbytes + transient_peak
        return out, stats

    stats.strategy = "small_overlap"
    acc: BlendAccumulator | None = None
    transient_peak = 0
    for idx in order:
        x, y = plan.positions[idx]
        raw = img[y : y + t, x : x + t]
        processed = proc.process(raw)
        if processed.shape[0] != t * s or processed.shape[1] != t * s:
            raise ShapeError(
                f"{proc.descriptor.name} returned {processed.shape[:2]}, expected {(t * s, t * s)}"
            )
        if acc is None:
            acc = BlendAccumulator(plan, blend, processed.shape[2], scale=s, dtype=img.dtype)
        acc.add(processed, x, y)
        stats.tiles_count += 1
        stats.pixels_processed += t * t
        transient_peak = max(transient_peak, processed.nbytes)
    assert acc is not None
    stats.peak_bytes = acc.values.nbytes + acc.weights.nbytes + transient_peak
    return acc.finalize(), stats


def run_acpt(
    img: _Raster,
    proc: TileProcessor,
    tile_size: int,
    padding_size: int | None = None,
    overlap_ratio: float = 0.25,
    blend: BlendSpec = BlendSpec(),
):
    """Adaptive tiled processing of a whole buffer.

    Chooses the strategy from the image extents (see select_strategy),
    processes each tile, and reassembles an output of input dims times the
    processor's scale. Returns the same buffer kind that went in.
    """
    plan = plan_tiling(
        img.width, img.height, tile_size,
        overlap_ratio=overlap_ratio, padding_size=padding_size,
    )
    out, _ = apply_plan(img.data, proc, plan, blend)
    return type(img)(out)
