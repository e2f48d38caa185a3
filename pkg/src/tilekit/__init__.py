"""tilekit: memory-bounded tiled image processing.

A numpy library covering adaptive context-preserving tiling with
neighbour-sourced padding, the diffusion-side arithmetic (noise schedule,
three-way guidance, hallucination-aware loss, artifact-ratio filtering),
a trainable latent upscaler, quality metrics, and a co-design profiler,
plus the three-stage high-resolution pipeline that ties them together.
"""

from . import diffusion, errors, imagecore, losses, metrics, pipeline, processors, \
    profiler, projection, synth, tiling
from .imagecore import ImageBuffer, LatentGrid, Rect, ResampleFilter, crop, \
    load_image, place, resample, save_image
from .tiling import AdjacentPadding, BlendMode, BlendSpec, PaddingMode, SmallOverlap, \
    TilingPlan, default_padding_size, run_acpt, select_strategy, tile_positions

__version__ = "0.1.0"
