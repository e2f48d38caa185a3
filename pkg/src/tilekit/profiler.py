"""Tile-size/overlap cost analysis: the pixel-overhead model, a sweep
harness, and speedup-breakdown arithmetic.

Overlapping tiles at ratio r process (1/(1-r))^2 times the output pixels
(4x at 50%); adjacent padding costs only ((tile + 2*pad)/tile)^2. The sweep
measures both against the engine's own pixel counters. Wall times are
reported as medians but never asserted against: they are hardware facts,
not model facts.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidRatio, ShapeError
from .processors import TileProcessor
from .tiling import BlendSpec, apply_plan, default_padding_size, plan_tiling

__all__ = [
    "ProfileRecord",
    "BreakdownReport",
    "overhead_ratio",
    "adjacent_overhead_ratio",
    "sweep",
    "breakdown_report",
    "records_to_csv",
]


def overhead_ratio(overlap: float) -> float:
    """Pixels processed relative to output pixels under overlap r: (1/(1-r))^2."""
    if not 0.0 <= overlap < 1.0:
        raise InvalidRatio(f"overlap must be in [0, 1), got {overlap}")
    return (1.0 / (1.0 - overlap)) ** 2


def adjacent_overhead_ratio(tile_size: int, padding_size: int) -> float:
    """Padding cost of the 0%-overlap strategy: ((t + 2p)/t)^2."""
    if tile_size < 1 or padding_size < 0:
        raise InvalidRatio(f"bad tile/padding sizes ({tile_size}, {padding_size})")
    return ((tile_size + 2 * padding_size) / tile_size) ** 2


@dataclass
class ProfileRecord:
    """One swept configuration with engine-counted costs."""

    strategy: str
    tile_size: int
    overlap_ratio: float
    padding: int
    tiles_count: int
    pixels_processed: int
    model_overhead: float
    wall_seconds: float
    peak_bytes: int


def sweep(
    img: np.ndarray,
    proc: TileProcessor,
    tile_sizes: Sequence[int],
    overlaps: Sequence[float],
    repeats: int = 1,
    *,
    include_adjacent: bool = True,
    blend: BlendSpec = BlendSpec(),
    verify_against: np.ndarray | None = None,
) -> list[ProfileRecord]:
    """Run every (tile_size, overlap) small-overlap config, plus the
    adjacent-padding config per tile size, and record exact pixel counts,
    median wall time, and peak engine bytes.

    Configurations run sequentially to keep timings honest. When
    verify_against is given, each record's output is checked against it
    (max abs error 1e-6) before being counted.
    """
    if repeats < 1:
        raise InvalidRatio(f"repeats must be >= 1, got {repeats}")
    h, w = img.shape[:2]
    records: list[ProfileRecord] = []

    def run(plan, padding: int, overlap: float, model: float, label: str):
        times = []
        out = stats = None
        for _ in range(repeats):
            t0 = time.perf_counter()
            out, stats = apply_plan(img, proc, plan)
            times.append(time.perf_counter() - t0)
        if verify_against is not None:
            err = float(np.max(np.abs(out - verify_against)))
            if err > 1e-6:
                raise ShapeError(f"{label} t={plan.tile_size}: output drifted by {err:g}")
        records.append(ProfileRecord(
            strategy=label,
            tile_size=plan.tile_size,
            overlap_ratio=overlap,
            padding=padding,
            tiles_count=stats.tiles_count,
            pixels_processed=stats.pixels_processed,
            model_overhead=model,
            wall_seconds=float(np.median(times)),
            peak_bytes=stats.peak_bytes,
        ))

    for t in tile_sizes:
        if t > min(w, h):
            raise InvalidRatio(f"tile size {t} exceeds image {w}x{h}")
        for r in overlaps:
            plan = plan_tiling(w, h, t, overlap_ratio=r, force="overlap")
            run(plan, 0, r, overhead_ratio(r), "small_overlap")
        if include_adjacent and w % t == 0 and h % t == 0:
            pad = default_padding_size(t)
            plan = plan_tiling(w, h, t, padding_size=pad, force="adjacent")
            run(plan, pad, 0.0, adjacent_overhead_ratio(t, pad), "adjacent_padding")
    return records


def records_to_csv(records: Sequence[ProfileRecord], fh=None) -> str:
    """CSV with one line per record; returns the text when fh is None."""
    own = fh is None
    if own:
        fh = io.StringIO()
    writer = csv.writer(fh)
    writer.writerow([
        "strategy", "tile_size", "overlap", "padding", "tiles",
        "pixels_processed", "model_overhead", "wall_ms", "peak_bytes",
    ])
    for r in records:
        writer.writerow([
            r.strategy, r.tile_size, f"{r.overlap_ratio:g}", r.padding, r.tiles_count,
            r.pixels_processed, f"{r.model_overhead:.6f}",
            f"{r.wall_seconds * 1e3:.3f}", r.peak_bytes,
        ])
    return fh.getvalue() if own else ""


@dataclass
class BreakdownReport:
    """Stage speedups and their cumulative product."""

    stages: list[tuple[str, float]]
    cumulative: float

    def to_json(self) -> str:
        return json.dumps({
            "stages": [{"label": label, "ratio": ratio} for label, ratio in self.stages],
            "cumulative": self.cumulative,
        })

    def format(self) -> str:
        parts = " x ".join(f"{ratio:.2f}" for _, ratio in self.stages)
        return f"{parts} = {self.cumulative:.2f}"


def breakdown_report(stage_ratios: Sequence[tuple[str, float]]) -> BreakdownReport:
    """Multiply per-stage speedups into an end-to-end figure."""
    if not stage_ratios:
        raise InvalidRatio("need at least one stage ratio")
    for label, ratio in stage_ratios:
        if ratio <= 0.0:
            raise InvalidRatio(f"stage {label!r} has non-positive ratio {ratio}")
    cumulative = 1.0
    for _, ratio in stage_ratios:
        cumulative *= ratio
    return BreakdownReport(list(stage_ratios), cumulative)
