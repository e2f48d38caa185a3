"""Noise schedule, three-way guidance combination, and a toy denoising loop.

The schedule is variance preserving: alpha(t) = cos(pi*t/2) and
sigma(t) = sin(pi*t/2), so the signal-to-noise ratio alpha^2/sigma^2 is
strictly decreasing on (0, 1] and hits zero at t = 1. sigma is floored at
1e-4 to keep the t = 0 endpoint usable in samplers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import InvalidRatio, ShapeError
from .imagecore import LatentGrid

__all__ = [
    "SIGMA_FLOOR",
    "Schedule",
    "schedule_cosine",
    "GuidanceWeights",
    "Conditioning",
    "NoisySample",
    "add_noise",
    "cfg_combine",
    "denoise_loop",
]

SIGMA_FLOOR = 1e-4


@dataclass(frozen=True)
class Schedule:
    """alpha(t), sigma(t) for t in [0, 1]; both accept floats or arrays."""

    name: str
    alpha: Callable[[np.ndarray], np.ndarray]
    sigma: Callable[[np.ndarray], np.ndarray]

    def snr(self, t):
        a = np.asarray(self.alpha(t), dtype=np.float64)
        s = np.asarray(self.sigma(t), dtype=np.float64)
        return a * a / (s * s)

    def to_csv(self, path, points: int = 101) -> None:
        ts = np.linspace(0.0, 1.0, points)
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "alpha", "sigma", "snr"])
            for t in ts:
                writer.writerow([f"{t:.6f}", repr(float(self.alpha(t))),
                                 repr(float(self.sigma(t))), repr(float(self.snr(t)))])


def schedule_cosine() -> Schedule:
    """Variance-preserving cosine schedule with a floored sigma at t = 0."""

    def alpha(t):
        return np.cos(np.asarray(t, dtype=np.float64) * (np.pi / 2.0))

    def sigma(t):
        return np.maximum(np.sin(np.asarray(t, dtype=np.float64) * (np.pi / 2.0)), SIGMA_FLOOR)

    return Schedule("cosine", alpha, sigma)


@dataclass(frozen=True)
class GuidanceWeights:
    """Image and text guidance strengths; both must be positive."""

    s_img: float
    s_txt: float

    def __post_init__(self):
        if self.s_img <= 0.0 or self.s_txt <= 0.0:
            raise InvalidRatio(
                f"guidance weights must be > 0, got ({self.s_img}, {self.s_txt})"
            )


@dataclass(frozen=True)
class Conditioning:
    """Optional image and text conditioning; None is the null token."""

    image: Optional[LatentGrid] = None
    text: Optional[np.ndarray] = None


@dataclass(frozen=True)
class NoisySample:
    z_t: LatentGrid
    t: float
    eps: LatentGrid


def add_noise(z: LatentGrid, eps: LatentGrid, t: float, sched: Schedule) -> NoisySample:
    """z_t = alpha(t) * z + sigma(t) * eps, elementwise."""
    if z.shape != eps.shape:
        raise ShapeError(f"z {z.shape} and eps {eps.shape} differ")
    if not 0.0 <= t <= 1.0:
        raise InvalidRatio(f"t must be in [0, 1], got {t}")
    a = float(sched.alpha(t))
    s = float(sched.sigma(t))
    return NoisySample(LatentGrid(a * z.data + s * eps.data), float(t), eps)


def cfg_combine(
    f_null: LatentGrid, f_img: LatentGrid, f_full: LatentGrid, w: GuidanceWeights
) -> LatentGrid:
    """Combine the three conditional evaluations into one guided prediction.

    Algebraically this is
        f_null + s_img * (f_img - f_null) + s_txt * (f_full - f_img);
    it is evaluated anchored at f_full so that both unit weights and equal
    inputs reproduce their operand exactly, with no rounding residue.
    """
    if not (f_null.shape == f_img.shape == f_full.shape):
        raise ShapeError(
            f"shapes differ: {f_null.shape}, {f_img.shape}, {f_full.shape}"
        )
    d_img = f_img.data - f_null.data
    d_txt = f_full.data - f_img.data
    g = f_full.data + (w.s_img - 1.0) * d_img + (w.s_txt - 1.0) * d_txt
    return LatentGrid(g)


def denoise_loop(
    z_init: LatentGrid,
    denoiser: Callable[[LatentGrid, float, Optional[LatentGrid], Optional[np.ndarray]], LatentGrid],
    cond: Conditioning,
    w: GuidanceWeights,
    sched: Schedule,
    steps: int,
    *,
    t_start: float = 1.0,
) -> LatentGrid:
    """Deterministic first-order sampler from t_start down to 0.

    Each step makes exactly three denoiser evaluations (null, image-only,
    full conditioning), combines them with cfg_combine, and updates
        z <- (z - sigma(t) * g) / alpha(t) * alpha(t') + sigma(t') * g.
    """
    if steps < 1:
        raise InvalidRatio(f"steps must be >= 1, got {steps}")
    if not 0.0 < t_start <= 1.0:
        raise InvalidRatio(f"t_start must be in (0, 1], got {t_start}")
    ts = np.linspace(t_start, 0.0, steps + 1)
    z = z_init
    for k in range(steps):
        t, t_next = float(ts[k]), float(ts[k + 1])
        f_null = denoiser(z, t, None, None)
        f_img = denoiser(z, t, cond.image, None)
        f_full = denoiser(z, t, cond.image, cond.text)
        g = cfg_combine(f_null, f_img, f_full, w)
        a, s = float(sched.alpha(t)), float(sched.sigma(t))
        a2, s2 = float(sched.alpha(t_next)), float(sched.sigma(t_next))
        z = LatentGrid((z.data - s * g.data) / a * a2 + s2 * g.data)
    return z
