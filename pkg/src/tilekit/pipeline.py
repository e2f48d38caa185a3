"""Three-stage processing of high-resolution images.

Stage 1 edits at a standard working resolution (shorter side 512) in
latent space, stage 2 projects the edited latent up to the target latent
resolution, stage 3 decodes and runs the tiled upscaler. Everything is
deterministic under a fixed seed, and stage 1 never touches a latent
larger than the working resolution allows: that bound is the whole point
of the decomposition.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .diffusion import Conditioning, GuidanceWeights, add_noise, denoise_loop, schedule_cosine
from .errors import ChannelMismatch, InvalidRatio, ScaleCompositionError, ShapeError
from .imagecore import ImageBuffer, LatentGrid, ResampleFilter, resample
from .processors import (
    CnnProcessor, CnnWeights, ConvKernel, ConvProcessor, GainProcessor,
    IdentityProcessor, NearestUpscaler, cnn_forward, load_weights,
)
from .projection import AutoencoderStub, ProjectionModel, load_projection, \
    new_projection_model, project_forward
from .tiling import BlendMode, BlendSpec, apply_plan, default_padding_size, plan_tiling

__all__ = [
    "EDIT_RESOLUTION",
    "PipelineConfig",
    "PipelineReport",
    "StageReport",
    "run_pipeline",
    "make_processor",
    "make_toy_denoiser",
    "identity_projection",
]

EDIT_RESOLUTION = 512


@dataclass
class PipelineConfig:
    """Everything run_pipeline needs; see from_json for the file schema."""

    seed: int = 0
    preprocess_filter: ResampleFilter = ResampleFilter.LANCZOS3
    edit_strength: float = 0.0
    edit_steps: int = 8
    s_img: Optional[float] = None
    s_txt: Optional[float] = None
    denoiser_weights: Optional[str] = None
    projection_model: Optional[str] = None
    projection_scale: int = 4
    upscale_processor: str = "identity"
    upscale_weights: Optional[str] = None
    tile_size: int = 512
    padding: Optional[int] = None
    overlap: float = 0.25
    blend: BlendMode = BlendMode.LINEAR_FEATHER
    latent_space_upscale: bool = False

    def __post_init__(self):
        if not 0.0 <= self.edit_strength <= 1.0:
            raise InvalidRatio(f"edit_strength must be in [0, 1], got {self.edit_strength}")
        if self.edit_strength > 0.0 and (self.s_img is None or self.s_txt is None):
            raise InvalidRatio("editing is enabled but guidance weights s_img/s_txt are unset")

    @classmethod
    def from_json(cls, source) -> "PipelineConfig":
        if isinstance(source, (str, Path)):
            doc = json.loads(Path(source).read_text())
        else:
            doc = dict(source)
        pre = doc.get("preprocess", {})
        edit = doc.get("edit", {})
        proj = doc.get("projection", {})
        ups = doc.get("upscale", {})
        return cls(
            seed=doc.get("seed", 0),
            preprocess_filter=ResampleFilter(pre.get("filter", "lanczos3")),
            edit_strength=edit.get("strength", 0.0),
            edit_steps=edit.get("steps", 8),
            s_img=edit.get("s_img"),
            s_txt=edit.get("s_txt"),
            denoiser_weights=edit.get("denoiser_weights"),
            projection_model=proj.get("model"),
            projection_scale=proj.get("scale", 4),
            upscale_processor=ups.get("processor", "identity"),
            upscale_weights=ups.get("weights"),
            tile_size=ups.get("tile_size", 512),
            padding=ups.get("padding"),
            overlap=ups.get("overlap", 0.25),
            blend=BlendMode(ups.get("blend", "linear_feather")),
            latent_space_upscale=ups.get("latent_space", False),
        )


@dataclass
class StageReport:
    name: str
    seconds: float
    peak_bytes: int
    detail: dict = field(default_factory=dict)


@dataclass
class PipelineReport:
    stages: list[StageReport] = field(default_factory=list)
    latent_shape: tuple[int, int, int] = (0, 0, 0)
    plan_summary: dict = field(default_factory=dict)
    output_path: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps({
            "stages": [
                {"name": s.name, "seconds": s.seconds, "peak_bytes": s.peak_bytes,
                 "detail": s.detail}
                for s in self.stages
            ],
            "latent_shape": list(self.latent_shape),
            "plan": self.plan_summary,
            "output_path": self.output_path,
        })


def make_processor(spec: str = "identity", weights_path=None):
    """Build an upscale-stage processor from a short spec string.

    identity | gain:G | nearest:N | box:R | gauss:R:SIGMA, or pass a
    weights file for a CNN processor.
    """
    if weights_path is not None:
        return CnnProcessor(load_weights(weights_path))
    name, _, args = spec.partition(":")
    if name == "identity":
        return IdentityProcessor()
    if name == "gain":
        return GainProcessor(float(args))
    if name == "nearest":
        return NearestUpscaler(int(args))
    if name == "box":
        return ConvProcessor(ConvKernel.box(int(args)))
    if name == "gauss":
        radius, sigma = args.split(":")
        return ConvProcessor(ConvKernel.gaussian(int(radius), float(sigma)))
    raise InvalidRatio(f"unknown processor spec {spec!r}")


def make_toy_denoiser(weights: Optional[CnnWeights]):
    """Wrap CNN weights as a three-conditioning denoiser callable.

    The CNN sees the noisy latent stacked with the image conditioning
    (zeros for the null token); the first entries of the text vector act as
    per-channel output biases. With no weights the denoiser predicts zero
    noise everywhere.
    """
    if weights is None:
        def zero(z, t, c_img, c_txt):
            return LatentGrid(np.zeros_like(z.data))
        return zero

    def denoiser(z, t, c_img, c_txt):
        cond = c_img.data if c_img is not None else np.zeros_like(z.data)
        x = np.concatenate([z.data, cond], axis=2)
        if x.shape[2] != weights.in_ch:
            raise ChannelMismatch(
                f"denoiser weights expect {weights.in_ch} input channels, got {x.shape[2]}"
            )
        y = cnn_forward(x, weights)
        if c_txt is not None:
            bias = np.zeros(y.shape[2])
            vec = np.asarray(c_txt, dtype=np.float64).ravel()
            bias[: min(len(vec), y.shape[2])] = vec[: y.shape[2]]
            y = y + bias
        return LatentGrid(y.astype(z.data.dtype))

    return denoiser


def identity_projection(scale: int) -> ProjectionModel:
    """A projection whose conv stack is zero: exact nearest-neighbour x scale."""
    model = new_projection_model(scale=scale, blocks=1, width=4, seed=0)
    for layer in model.weights.layers:
        layer.weights[:] = 0.0
        layer.bias[:] = 0.0
    return model


def _to_rgb(img: ImageBuffer) -> ImageBuffer:
    if img.channels == 3:
        return img
    if img.channels == 1:
        return ImageBuffer(np.repeat(img.data, 3, axis=2))
    if img.channels == 4:
        return ImageBuffer(img.data[:, :, :3].copy())
    raise ChannelMismatch(f"cannot map {img.channels} channels to RGB")


def _round8(n: int) -> int:
    return max(8, int(round(n / 8.0)) * 8)


def run_pipeline(
    img: ImageBuffer,
    cfg: PipelineConfig,
    conditioning: Optional[Conditioning] = None,
) -> tuple[ImageBuffer, PipelineReport]:
    """Edit at the working resolution, project the latent up, tile-upscale.

    The shorter input side must be at least the working resolution, and
    working-res * projection scale * upscaler scale must give back the
    shorter input side, or ScaleCompositionError is raised before any work
    happens.
    """
    if min(img.width, img.height) < EDIT_RESOLUTION:
        raise ShapeError(
            f"input shorter side must be >= {EDIT_RESOLUTION}, got {img.width}x{img.height}"
        )
    ae = AutoencoderStub()
    report = PipelineReport()

    proc = make_processor(cfg.upscale_processor, cfg.upscale_weights)
    if cfg.projection_model:
        proj = load_projection(cfg.projection_model)
        if proj.upscale != cfg.projection_scale:
            raise ScaleCompositionError(
                f"projection file has scale {proj.upscale}, config says {cfg.projection_scale}"
            )
    else:
        proj = identity_projection(cfg.projection_scale)

    shorter = min(img.width, img.height)
    composed = EDIT_RESOLUTION * proj.upscale * proc.descriptor.scale
    if composed != shorter:
        raise ScaleCompositionError(
            f"{EDIT_RESOLUTION} x {proj.upscale} (projection) x "
            f"{proc.descriptor.scale} (upscaler) = {composed}, but the input's "
            f"shorter side is {shorter}"
        )

    # stage 1: preprocess to the working resolution and edit in latent space
    t0 = time.perf_counter()
    rgb = _to_rgb(img)
    scale_down = shorter / EDIT_RESOLUTION
    if img.width <= img.height:
        w512, h512 = EDIT_RESOLUTION, _round8(round(img.height / scale_down))
    else:
        w512, h512 = _round8(round(img.width / scale_down)), EDIT_RESOLUTION
    small = resample(rgb, w512, h512, cfg.preprocess_filter)
    z0 = ae.encode(small)
    if min(z0.height, z0.width) > EDIT_RESOLUTION // ae.factor:
        raise ShapeError(f"stage-1 latent {z0.shape} exceeds the working-resolution bound")

    cond = conditioning or Conditioning()
    if cond.image is None:
        cond = Conditioning(image=z0, text=cond.text)
    if cfg.edit_strength > 0.0:
        sched = schedule_cosine()
        rng = np.random.default_rng(cfg.seed)
        eps = LatentGrid(rng.standard_normal(z0.shape).astype(z0.data.dtype))
        noisy = add_noise(z0, eps, cfg.edit_strength, sched)
        denoiser = make_toy_denoiser(
            load_weights(cfg.denoiser_weights) if cfg.denoiser_weights else None
        )
        weights = GuidanceWeights(cfg.s_img, cfg.s_txt)
        z_edit = denoise_loop(noisy.z_t, denoiser, cond, weights, sched,
                              cfg.edit_steps, t_start=cfg.edit_strength)
    else:
        z_edit = z0
    report.stages.append(StageReport(
        "edit", time.perf_counter() - t0,
        small.data.nbytes + 2 * z_edit.data.nbytes,
        {"working_size": [w512, h512], "strength": cfg.edit_strength},
    ))
    report.latent_shape = z_edit.shape

    # stage 2: latent projection
    t0 = time.perf_counter()
    z_hi = project_forward(z_edit, proj)
    report.stages.append(StageReport(
        "project", time.perf_counter() - t0,
        z_edit.data.nbytes + z_hi.data.nbytes,
        {"scale": proj.upscale, "parameters": proj.parameter_count},
    ))

    # stage 3: tiled upscaling, by default in pixel space
    t0 = time.perf_counter()
    pad = default_padding_size(cfg.tile_size) if cfg.padding is None else cfg.padding
    if cfg.latent_space_upscale:
        plan = plan_tiling(z_hi.width, z_hi.height, min(cfg.tile_size, z_hi.width, z_hi.height),
                           overlap_ratio=cfg.overlap, padding_size=pad)
        out_arr, stats = apply_plan(z_hi.data, proc, plan, BlendSpec(cfg.blend))
        result = ae.decode(LatentGrid(out_arr))
    else:
        decoded = ae.decode(z_hi)
        plan = plan_tiling(decoded.width, decoded.height, cfg.tile_size,
                           overlap_ratio=cfg.overlap, padding_size=pad)
        out_arr, stats = apply_plan(decoded.data, proc, plan, BlendSpec(cfg.blend))
        result = ImageBuffer(out_arr)
    report.stages.append(StageReport(
        "upscale", time.perf_counter() - t0, stats.peak_bytes,
        {"strategy": stats.strategy, "tiles": stats.tiles_count,
         "pixels_processed": stats.pixels_processed},
    ))
    report.plan_summary = {
        "strategy": stats.strategy,
        "tile_size": plan.tile_size,
        "tiles": stats.tiles_count,
        "input_dims": list(plan.input_dims),
    }
    return result, report
