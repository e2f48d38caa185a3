"""Learnable latent upscaling: a small residual conv stack trained by hand.

The model expands a latent by nearest-neighbour and adds a learned
correction from a few 3x3 conv layers, so zero weights mean plain nearest
upsampling. Training is mean-squared error with a moment-based adaptive
optimizer; gradients are exact reverse-mode and are verified against
finite differences in the test suite.

A fixed-weight autoencoder stub stands in for the frozen real encoder and
decoder: spatial /8, four latent channels, exact on constant images.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ChannelMismatch, DivergenceError, EmptyInput, InvalidRatio, ShapeError
from .imagecore import ImageBuffer, LatentGrid, ResampleFilter, resample, resample_array
from .processors import Activation, CnnProcessor, CnnWeights, ConvLayer, conv3x3, \
    load_weights, nearest_upsample, save_weights, _shift_slices

__all__ = [
    "AutoencoderStub",
    "TrainConfig",
    "ProjectionModel",
    "new_projection_model",
    "project_forward",
    "project_backward",
    "train_projection",
    "build_projection_corpus",
    "linear_upsample_baseline",
    "save_projection",
    "load_projection",
]


# ---------------------------------------------------------------------------
# autoencoder stub

_MIX_3TO4 = np.array(
    [[1.0, 0.0, 0.0],
     [0.0, 1.0, 0.0],
     [0.0, 0.0, 1.0],
     [0.25, 0.5, 0.25]], dtype=np.float64)

# symmetric orthogonal mixing (self-inverse), entries +-0.5
_MIX_4TO4 = 0.5 * np.array(
    [[1.0, 1.0, 1.0, 1.0],
     [1.0, -1.0, 1.0, -1.0],
     [1.0, 1.0, -1.0, -1.0],
     [1.0, -1.0, -1.0, 1.0]], dtype=np.float64)

_DROP_4TO3 = np.array(
    [[1.0, 0.0, 0.0, 0.0],
     [0.0, 1.0, 0.0, 0.0],
     [0.0, 0.0, 1.0, 0.0]], dtype=np.float64)


class AutoencoderStub:
    """Fixed-weight encoder/decoder pair: 8x spatial reduction, 4 channels.

    encode = 8x8 average pooling, then two 1x1 channel mixes; decode applies
    the inverse mixes and nearest-expands. decode(encode(x)) reproduces
    constant images exactly and block-averages everything else.
    """

    factor = 8
    latent_channels = 4

    def encode(self, img: ImageBuffer) -> LatentGrid:
        if img.channels != 3:
            raise ChannelMismatch(f"stub encoder expects 3 channels, got {img.channels}")
        if img.height % self.factor or img.width % self.factor:
            raise ShapeError(
                f"image dims must be divisible by {self.factor}, got {img.height}x{img.width}"
            )
        x = img.data.astype(np.float64)
        h, w = img.height // self.factor, img.width // self.factor
        pooled = x.reshape(h, self.factor, w, self.factor, 3).mean(axis=(1, 3))
        z = (pooled @ _MIX_3TO4.T) @ _MIX_4TO4.T
        return LatentGrid(z.astype(np.float32))

    def decode(self, z: LatentGrid) -> ImageBuffer:
        if z.channels != self.latent_channels:
            raise ChannelMismatch(f"stub decoder expects 4 channels, got {z.channels}")
        u = z.data.astype(np.float64) @ _MIX_4TO4.T  # self-inverse
        rgb = u @ _DROP_4TO3.T
        return ImageBuffer(nearest_upsample(rgb, self.factor).astype(np.float32))


# ---------------------------------------------------------------------------
# model

@dataclass
class ProjectionModel:
    """Nearest x-scale expansion plus a residual 3x3 conv stack."""

    weights: CnnWeights
    train_history: list[tuple[int, float, Optional[float]]] = field(default_factory=list)

    def __post_init__(self):
        if not self.weights.residual:
            raise ShapeError("projection weights must be residual")
        if self.weights.in_ch != self.weights.out_ch:
            raise ShapeError("projection must preserve channel count")

    @property
    def upscale(self) -> int:
        return self.weights.scale

    @property
    def parameter_count(self) -> int:
        return self.weights.parameter_count()

    def as_processor(self, name: str = "projection") -> CnnProcessor:
        return CnnProcessor(self.weights, name=name)


def new_projection_model(
    scale: int = 4,
    blocks: int = 6,
    width: int = 12,
    channels: int = 4,
    seed: int = 0,
    init_scale: float = 0.05,
) -> ProjectionModel:
    """Fresh model: He-initialized hidden layers, final layer scaled by
    init_scale so the stack starts near the identity (plain nearest
    upsampling) without choking gradient flow."""
    if blocks < 1:
        raise InvalidRatio(f"blocks must be >= 1, got {blocks}")
    rng = np.random.default_rng(seed)
    chans = [channels] + [width] * (blocks - 1) + [channels]
    layers = []
    for i, (ci, co) in enumerate(zip(chans, chans[1:])):
        std = np.sqrt(2.0 / (9 * ci))
        if i == blocks - 1:
            std *= init_scale
        w = rng.normal(0.0, std, size=(3, 3, ci, co))
        b = np.zeros(co)
        act = Activation.IDENTITY if i == blocks - 1 else Activation.RELU
        layers.append(ConvLayer(ci, co, w, b, act))
    return ProjectionModel(CnnWeights(layers, scale=scale, residual=True))


def _forward_cached(z: np.ndarray, model: ProjectionModel):
    up = nearest_upsample(z.astype(np.float64), model.upscale)
    pre_acts = []
    h = up
    for layer in model.weights.layers:
        pre = conv3x3(h, layer.weights, layer.bias)
        pre_acts.append((h, pre))
        h = np.maximum(pre, 0.0) if layer.activation is Activation.RELU else pre
    return up, pre_acts, up + h


def project_forward(z: LatentGrid, model: ProjectionModel) -> LatentGrid:
    """Upscale a latent by the model's scale factor; pure."""
    if z.channels != model.weights.in_ch:
        raise ChannelMismatch(
            f"model expects {model.weights.in_ch} channels, got {z.channels}"
        )
    _, _, y = _forward_cached(z.data, model)
    return LatentGrid(y.astype(z.data.dtype))


def _conv3x3_backward(x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray):
    h, w = x.shape[:2]
    grad_w = np.zeros_like(weights)
    grad_x = np.zeros_like(x)
    for dy in (-1, 0, 1):
        ydst, ysrc = _shift_slices(dy, h)
        for dx in (-1, 0, 1):
            xdst, xsrc = _shift_slices(dx, w)
            # forward did out[dst] += x[src] @ W
            grad_w[dy + 1, dx + 1] = np.einsum(
                "hwi,hwo->io", x[ysrc, xsrc], grad_out[ydst, xdst]
            )
            grad_x[ysrc, xsrc] += grad_out[ydst, xdst] @ weights[dy + 1, dx + 1].T
    grad_b = grad_out.sum(axis=(0, 1))
    return grad_w, grad_b, grad_x


def project_backward(
    z: LatentGrid, model: ProjectionModel, grad_out: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Exact reverse-mode gradients of project_forward.

    Returns ([(dW, db) per layer], d_input). grad_out must match the
    forward output shape.
    """
    up, pre_acts, y = _forward_cached(z.data, model)
    if grad_out.shape != y.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match output {y.shape}")
    g = np.asarray(grad_out, dtype=np.float64)
    grads, grad_stack_in = _backward_from_cache(model, up, pre_acts, g)
    grad_up = g + grad_stack_in  # residual skip joins the stack input gradient
    s = model.upscale
    hh, ww, cc = z.shape
    grad_z = grad_up.reshape(hh, s, ww, s, cc).sum(axis=(1, 3))
    return grads, grad_z


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 50
    batch_size: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise InvalidRatio("learning_rate must be > 0")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise InvalidRatio("beta1 and beta2 must be in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidRatio("epochs and batch_size must be >= 1")


class _Adam:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.epsilon)


def _pair_mse(model: ProjectionModel, low: np.ndarray, high: np.ndarray) -> float:
    _, _, y = _forward_cached(low, model)
    d = y - high
    return float(np.mean(d * d))


def _corpus_mse(model: ProjectionModel, corpus) -> float:
    return float(np.mean([
        _pair_mse(model, lo.data.astype(np.float64), hi.data.astype(np.float64))
        for lo, hi in corpus
    ]))


def train_projection(
    corpus: Sequence[tuple[LatentGrid, LatentGrid]],
    cfg: TrainConfig,
    *,
    model: ProjectionModel | None = None,
    val_corpus: Sequence[tuple[LatentGrid, LatentGrid]] | None = None,
    log_path=None,
) -> ProjectionModel:
    """Fit the projection to (low, high) latent pairs by MSE.

    Deterministic for a fixed config seed. Raises DivergenceError if the
    loss goes non-finite. Epoch history lands in model.train_history and,
    when log_path is given, in a CSV of (epoch, train_mse, val_mse).
    """
    if len(corpus) == 0:
        raise EmptyInput("training corpus is empty")
    if model is None:
        lo0, hi0 = corpus[0]
        if hi0.height % lo0.height or hi0.height // lo0.height < 1:
            raise ShapeError(
                f"cannot infer an integer scale from pair {lo0.shape} -> {hi0.shape}"
            )
        model = new_projection_model(scale=hi0.height // lo0.height,
                                     channels=lo0.channels, seed=cfg.seed)
    s = model.upscale
    for lo, hi in corpus:
        if (lo.height * s, lo.width * s) != (hi.height, hi.width) or lo.channels != hi.channels:
            raise ShapeError(
                f"pair shapes {lo.shape} -> {hi.shape} do not match scale {s}"
            )

    lows = [lo.data.astype(np.float64) for lo, _ in corpus]
    highs = [hi.data.astype(np.float64) for _, hi in corpus]
    params: list[np.ndarray] = []
    for layer in model.weights.layers:
        params.extend([layer.weights, layer.bias])
    opt = _Adam(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    model.train_history = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(corpus))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grad_sum = [np.zeros_like(p) for p in params]
            batch_loss = 0.0
            for idx in batch:
                low, high = lows[idx], highs[idx]
                up, pre_acts, y = _forward_cached(low, model)
                diff = y - high
                batch_loss += float(np.mean(diff * diff))
                grad_y = (2.0 / diff.size) * diff
                grads, _ = _backward_from_cache(model, up, pre_acts, grad_y)
                for j, (gw, gb) in enumerate(grads):
                    grad_sum[2 * j] += gw
                    grad_sum[2 * j + 1] += gb
            n = len(batch)
            batch_loss /= n
            if not np.isfinite(batch_loss):
                raise DivergenceError(f"loss became non-finite at epoch {epoch}")
            opt.step(params, [g / n for g in grad_sum])
            epoch_losses.append(batch_loss)
        train_mse = float(np.mean(epoch_losses))
        val_mse = _corpus_mse(model, val_corpus) if val_corpus else None
        model.train_history.append((epoch, train_mse, val_mse))

    if log_path is not None:
        with open(Path(log_path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_mse", "val_mse"])
            for epoch, train_mse, val_mse in model.train_history:
                writer.writerow([epoch, repr(train_mse), "" if val_mse is None else repr(val_mse)])
    return model


def _backward_from_cache(model: ProjectionModel, up, pre_acts, grad_y):
    grad_h = np.asarray(grad_y, dtype=np.float64).copy()
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.weights.layers)
    for i in range(len(model.weights.layers) - 1, -1, -1):
        layer = model.weights.layers[i]
        x_in, pre = pre_acts[i]
        if layer.activation is Activation.RELU:
            grad_h = grad_h * (pre > 0.0)
        gw, gb, grad_h = _conv3x3_backward(x_in, layer.weights, grad_h)
        grads[i] = (gw, gb)
    return grads, grad_h


def build_projection_corpus(
    images: Sequence[ImageBuffer], ae: AutoencoderStub, s: int = 4
) -> list[tuple[LatentGrid, LatentGrid]]:
    """(encode(downscaled image), encode(image)) pairs with exact ratio s."""
    if len(images) == 0:
        raise EmptyInput("no images given")
    pairs = []
    for img in images:
        if img.height % (ae.factor * s) or img.width % (ae.factor * s):
            raise ShapeError(
                f"image dims must divide by {ae.factor * s}, got {img.height}x{img.width}"
            )
        low_img = resample(img, img.width // s, img.height // s, ResampleFilter.LANCZOS3)
        pairs.append((ae.encode(low_img), ae.encode(img)))
    return pairs


def linear_upsample_baseline(z: LatentGrid, s: int, kind: str = "bilinear") -> LatentGrid:
    """Plain separable upsampling of a latent, for baseline comparisons."""
    filt = {"bilinear": ResampleFilter.BILINEAR, "bicubic": ResampleFilter.BICUBIC,
            "nearest": ResampleFilter.NEAREST}[kind]
    return LatentGrid(resample_array(z.data, z.width * s, z.height * s, filt))


def save_projection(model: ProjectionModel, path) -> None:
    save_weights(model.weights, path)


def load_projection(path) -> ProjectionModel:
    return ProjectionModel(load_weights(path))
