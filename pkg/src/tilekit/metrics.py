"""Quality metrics: PSNR, SSIM, L1/L2, and a tile-seam diagnostic."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import OutOfBounds, ShapeError, TooSmall
from .imagecore import ImageBuffer
from .tiling import TilingPlan

__all__ = [
    "SsimConfig",
    "psnr",
    "ssim",
    "l1",
    "l2",
    "seam_energy",
    "write_metric_report",
]


def _pair(a: ImageBuffer, b: ImageBuffer) -> tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise ShapeError(f"shapes differ: {a.shape} vs {b.shape}")
    return a.data.astype(np.float64), b.data.astype(np.float64)


def psnr(a: ImageBuffer, b: ImageBuffer, max_val: float = 1.0) -> float:
    """10*log10(max^2 / MSE) in dB over all channels jointly; inf when equal."""
    x, y = _pair(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(max_val * max_val / mse))


def l1(a: ImageBuffer, b: ImageBuffer) -> float:
    x, y = _pair(a, b)
    return float(np.mean(np.abs(x - y)))


def l2(a: ImageBuffer, b: ImageBuffer) -> float:
    x, y = _pair(a, b)
    return float(np.mean((x - y) ** 2))


@dataclass(frozen=True)
class SsimConfig:
    """Standard constants: 11x11 Gaussian window, sigma 1.5, K1/K2 = .01/.03."""

    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def gaussian(self) -> np.ndarray:
        ax = np.arange(self.window, dtype=np.float64) - (self.window - 1) / 2.0
        g = np.exp(-(ax**2) / (2.0 * self.sigma**2))
        return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable window means over fully interior windows only
    n = g.shape[0]
    x = sliding_window_view(x, n, axis=1) @ g
    return sliding_window_view(x, n, axis=0) @ g


def ssim(a: ImageBuffer, b: ImageBuffer, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean local structural similarity, averaged over channels."""
    x, y = _pair(a, b)
    if a.height < cfg.window or a.width < cfg.window:
        raise TooSmall(f"image {a.height}x{a.width} smaller than the {cfg.window}px window")
    g = cfg.gaussian()
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    scores = []
    for c in range(a.channels):
        xc, yc = x[:, :, c], y[:, :, c]
        mx = _filter_valid(xc, g)
        my = _filter_valid(yc, g)
        mxx = _filter_valid(xc * xc, g)
        myy = _filter_valid(yc * yc, g)
        mxy = _filter_valid(xc * yc, g)
        vx = mxx - mx * mx
        vy = myy - my * my
        cov = mxy - mx * my
        num = (2.0 * mx * my + c1) * (2.0 * cov + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def seam_energy(img: ImageBuffer, plan: TilingPlan) -> float:
    """Excess gradient along interior tile boundaries.

    Mean absolute cross-boundary difference on boundary rows/columns minus
    the same statistic over all non-boundary rows/columns. Positive excess
    indicates visible seams; a plan with no interior boundary scores 0.
    """
    w_plan, h_plan = plan.input_dims
    if w_plan != img.width or h_plan != img.height:
        raise OutOfBounds(f"plan is for {plan.input_dims}, image is {(img.width, img.height)}")
    data = img.data.astype(np.float64)
    bx = {x for x in plan.xs if 0 < x < img.width}
    by = {y for y in plan.ys if 0 < y < img.height}

    boundary, interior = [], []
    col_grad = np.abs(data[:, 1:, :] - data[:, :-1, :]).mean(axis=(0, 2))  # index x-1
    for x in range(1, img.width):
        (boundary if x in bx else interior).append(col_grad[x - 1])
    row_grad = np.abs(data[1:, :, :] - data[:-1, :, :]).mean(axis=(1, 2))
    for y in range(1, img.height):
        (boundary if y in by else interior).append(row_grad[y - 1])

    if not boundary:
        return 0.0
    return float(np.mean(boundary) - np.mean(interior))


def write_metric_report(rows: Sequence[dict], path) -> None:
    """CSV rows: image_id, strategy, psnr, ssim, seam_energy."""
    fields = ["image_id", "strategy", "psnr", "ssim", "seam_energy"]
    with open(Path(path), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fields})
