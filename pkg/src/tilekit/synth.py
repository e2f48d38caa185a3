"""Seeded synthetic imagery for tests, demos, and desk-scale corpora."""

from __future__ import annotations

import numpy as np

from .imagecore import ImageBuffer
from .processors import ConvKernel, conv2d

__all__ = ["textured_image", "textured_corpus", "edgy_image", "ramp_image", "index_image"]


def textured_image(height: int, width: int, channels: int = 3, seed: int = 0) -> ImageBuffer:
    """Locally correlated texture: smooth gradient + oriented waves + soft noise.

    Values stay well inside (0, 1) with a solidly positive mean, which is
    what makes zero padding visibly wrong at tile seams.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    yy = yy / max(height - 1, 1)
    xx = xx / max(width - 1, 1)
    out = np.zeros((height, width, channels), dtype=np.float64)
    for c in range(channels):
        base = rng.uniform(0.35, 0.6) + rng.uniform(-0.15, 0.15) * xx \
            + rng.uniform(-0.15, 0.15) * yy
        waves = np.zeros_like(base)
        for _ in range(3):
            theta = rng.uniform(0.0, np.pi)
            freq = rng.uniform(2.0, 12.0)
            phase = rng.uniform(0.0, 2 * np.pi)
            waves += rng.uniform(0.03, 0.08) * np.sin(
                2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase
            )
        noise = rng.standard_normal((height, width, 1)) * 0.15
        noise = conv2d(noise, ConvKernel.box(2).weights)[:, :, 0]
        out[:, :, c] = base + waves + noise
    return ImageBuffer(np.clip(out, 0.05, 0.95).astype(np.float32))


def textured_corpus(count: int, height: int, width: int, channels: int = 3,
                    seed: int = 0) -> list[ImageBuffer]:
    return [textured_image(height, width, channels, seed=seed + i) for i in range(count)]


def edgy_image(height: int, width: int, channels: int = 3, seed: int = 0) -> ImageBuffer:
    """Piecewise-constant scene: random half-plane steps plus rectangles.

    Sharp edges carry cross-scale structure that a learned upscaler can
    exploit and linear interpolation cannot, so this is the corpus of
    choice for projection training experiments.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(height) / height, np.arange(width) / width, indexing="ij")
    img = np.full((height, width), rng.uniform(0.3, 0.5))
    for _ in range(6):
        theta = rng.uniform(0.0, 2 * np.pi)
        offset = rng.uniform(0.2, 0.8)
        side = (np.cos(theta) * xx + np.sin(theta) * yy) > offset * (
            abs(np.cos(theta)) + abs(np.sin(theta))
        )
        img = img + side * rng.uniform(-0.25, 0.25)
    for _ in range(4):
        x0, y0 = rng.integers(0, width // 2), rng.integers(0, height // 2)
        x1 = x0 + rng.integers(width // 8, width // 2)
        y1 = y0 + rng.integers(height // 8, height // 2)
        img[y0:y1, x0:x1] += rng.uniform(-0.2, 0.2)
    img = np.clip(img, 0.05, 0.95)
    return ImageBuffer(np.repeat(img[:, :, None], channels, axis=2).astype(np.float32))


def ramp_image(height: int, width: int, channels: int = 1, axis: int = 1) -> ImageBuffer:
    """Exact linear ramp from 0 to 1 along one axis."""
    n = width if axis == 1 else height
    line = np.linspace(0.0, 1.0, n, dtype=np.float64)
    plane = np.tile(line, (height, 1)) if axis == 1 else np.tile(line[:, None], (1, width))
    return ImageBuffer(np.repeat(plane[:, :, None], channels, axis=2).astype(np.float32))


def index_image(height: int, width: int, channels: int = 1) -> ImageBuffer:
    """Pixel (y, x) holds value y*width + x; handy for exact-crop oracles."""
    vals = np.arange(height * width, dtype=np.float32).reshape(height, width, 1)
    return ImageBuffer(np.repeat(vals, channels, axis=2))
