"""Hallucination-aware training loss, artifact-ratio metric, and dataset filtering.

The total loss is l_ldm + lambda * l_hallu, where l_ldm is the MSE between
true and predicted noise and l_hallu is the mean squared value of a
detector mask over the decoded image. Filtering drops samples whose
partial-artifact ratio (PAR) exceeds a threshold, which can be calibrated
to hit a target drop fraction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DetectorError, EmptyInput, InvalidRatio, ShapeError
from .imagecore import ImageBuffer, LatentGrid

__all__ = [
    "LossTerms",
    "TrainingSample",
    "FilterResult",
    "ldm_loss",
    "hallucination_loss",
    "total_loss",
    "par",
    "calibrate_threshold",
    "filter_dataset",
    "residual_artifact_detector",
    "write_filter_manifest",
]


def ldm_loss(eps_true: LatentGrid, eps_pred: LatentGrid) -> float:
    """Mean squared error between true and predicted noise."""
    if eps_true.shape != eps_pred.shape:
        raise ShapeError(f"shapes differ: {eps_true.shape} vs {eps_pred.shape}")
    diff = eps_true.data.astype(np.float64) - eps_pred.data.astype(np.float64)
    return float(np.mean(diff * diff))


def _check_mask(mask: np.ndarray) -> np.ndarray:
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim not in (2, 3):
        raise ShapeError(f"mask must be (H, W) or (H, W, 1), got shape {m.shape}")
    if m.ndim == 3:
        m = m[:, :, 0]
    if not np.isfinite(m).all() or m.min() < 0.0 or m.max() > 1.0:
        raise ShapeError("mask values must be finite and in [0, 1]")
    return m


def hallucination_loss(mask: np.ndarray) -> float:
    """Mean of squared mask values: the detector's squared norm, per pixel."""
    m = _check_mask(mask)
    return float(np.mean(m * m))


@dataclass(frozen=True)
class LossTerms:
    l_ldm: float
    l_hallu: float
    lam: float
    total: float


def total_loss(l_ldm: float, l_hallu: float, lam: float) -> LossTerms:
    """total = l_ldm + lam * l_hallu, all terms non-negative."""
    if l_ldm < 0.0 or l_hallu < 0.0 or lam < 0.0:
        raise InvalidRatio("loss terms and lambda must be non-negative")
    return LossTerms(l_ldm, l_hallu, lam, l_ldm + lam * l_hallu)


def par(mask: np.ndarray, binarize_threshold: float = 0.5) -> float:
    """Fraction of pixels whose mask value exceeds the threshold."""
    if not 0.0 <= binarize_threshold <= 1.0:
        raise InvalidRatio(f"threshold must be in [0, 1], got {binarize_threshold}")
    m = _check_mask(mask)
    return float(np.mean(m > binarize_threshold))


def calibrate_threshold(pars: Sequence[float], target_drop_fraction: float) -> float:
    """The PAR threshold whose filter drops roughly the target fraction.

    Returns the (1 - target)-quantile of the observed PARs with linear
    interpolation between order statistics.
    """
    if len(pars) == 0:
        raise EmptyInput("cannot calibrate a threshold from zero samples")
    if not 0.0 < target_drop_fraction < 1.0:
        raise InvalidRatio(f"target drop must be in (0, 1), got {target_drop_fraction}")
    return float(np.quantile(np.asarray(pars, dtype=np.float64), 1.0 - target_drop_fraction))


@dataclass
class TrainingSample:
    """Target/source image pair with an opaque prompt token."""

    sample_id: str
    target: ImageBuffer
    source: ImageBuffer
    prompt_id: str = ""
    par: Optional[float] = None

    def __post_init__(self):
        if self.target.shape[:2] != self.source.shape[:2]:
            raise ShapeError(
                f"target {self.target.shape[:2]} and source {self.source.shape[:2]} differ"
            )


def _median3(channel: np.ndarray) -> np.ndarray:
    padded = np.pad(channel, 1, mode="edge")
    stack = [
        padded[dy : dy + channel.shape[0], dx : dx + channel.shape[1]]
        for dy in range(3)
        for dx in range(3)
    ]
    return np.median(np.stack(stack, axis=0), axis=0)


def residual_artifact_detector(sample: TrainingSample, tau: float = 0.15) -> np.ndarray:
    """Built-in stand-in detector: flags high-frequency residual pixels.

    Marks pixels where the target's luma deviates from its 3x3 median by
    more than tau. A crude heuristic, but a total function, which is all
    the filtering machinery requires of a detector.
    """
    luma = sample.target.data.mean(axis=2).astype(np.float64)
    resid = np.abs(luma - _median3(luma))
    return (resid > tau).astype(np.float64)


@dataclass
class FilterResult:
    kept: list[TrainingSample] = field(default_factory=list)
    dropped: list[TrainingSample] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)


def filter_dataset(
    samples: Sequence[TrainingSample],
    detector: Callable[[TrainingSample], np.ndarray],
    threshold: float,
    *,
    binarize_threshold: float = 0.5,
) -> FilterResult:
    """Keep samples whose PAR is at or below the threshold, order preserved.

    A detector failure routes the sample to dropped with the reason in its
    manifest record rather than aborting the run.
    """
    result = FilterResult()
    for sample in samples:
        try:
            mask = detector(sample)
            value = par(mask, binarize_threshold)
        except Exception as exc:
            err = DetectorError(f"{sample.sample_id}: {exc}")
            sample.par = None
            result.dropped.append(sample)
            result.records.append(
                {"sample_id": sample.sample_id, "par": None, "kept": False, "error": str(err)}
            )
            continue
        sample.par = value
        kept = value <= threshold
        (result.kept if kept else result.dropped).append(sample)
        result.records.append({"sample_id": sample.sample_id, "par": value, "kept": kept})
    return result


def write_filter_manifest(records: Sequence[dict], path) -> None:
    """One JSON object per line: {sample_id, par, kept[, error]}."""
    with open(Path(path), "w") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def load_dataset(root) -> list[TrainingSample]:
    """Read a dataset directory: index.json listing image pairs.

    The index schema is {"samples": [{"id", "target", "source",
    "prompt_id"?}, ...]} with image paths relative to the directory.
    """
    from .imagecore import load_image

    root = Path(root)
    index = json.loads((root / "index.json").read_text())
    samples = []
    for entry in index["samples"]:
        samples.append(TrainingSample(
            sample_id=str(entry["id"]),
            target=load_image(root / entry["target"]),
            source=load_image(root / entry["source"]),
            prompt_id=str(entry.get("prompt_id", "")),
        ))
    return samples
