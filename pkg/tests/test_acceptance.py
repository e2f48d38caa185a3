"""Acceptance gate: every release criterion at its stated tolerance.

Each test prints one PASS/FAIL line so the suite doubles as a checklist:

    pytest tests/test_acceptance.py -v -s
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from tilekit.diffusion import Conditioning, GuidanceWeights, cfg_combine, schedule_cosine
from tilekit.imagecore import ImageBuffer, LatentGrid
from tilekit.losses import (
    TrainingSample, calibrate_threshold, filter_dataset, par,
    residual_artifact_detector, total_loss,
)
from tilekit.metrics import psnr, seam_energy
from tilekit.pipeline import PipelineConfig, run_pipeline
from tilekit.processors import ConvKernel, ConvProcessor, conv2d_apply, nearest_upsample
from tilekit.profiler import adjacent_overhead_ratio, breakdown_report, overhead_ratio, sweep
from tilekit.projection import (
    TrainConfig, _corpus_mse, _forward_cached, build_projection_corpus,
    linear_upsample_baseline, new_projection_model, project_backward,
    train_projection, AutoencoderStub,
)
from tilekit.synth import textured_image
from tilekit.tiling import PaddingMode, apply_plan, default_padding_size, plan_tiling
from tilekit.processors import IdentityProcessor


@contextmanager
def criterion(number, label):
    try:
        yield
    except BaseException:
        print(f"FAIL criterion {number:2d}: {label}")
        raise
    print(f"PASS criterion {number:2d}: {label}")


def test_criterion_01_tiling_oracle_equivalence():
    with criterion(1, "ACPT strategy-A output == whole-image conv oracle "
                      "(50 random cases, max abs err <= 1e-6, <= 60 s)"):
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        worst = 0.0
        for case in range(50):
            tile = int(rng.choice([128, 256, 512]))
            mx = int(rng.integers(max(1, 256 // tile), 1024 // tile + 1))
            my = int(rng.integers(max(1, 256 // tile), 1024 // tile + 1))
            width, height = tile * mx, tile * my
            radius = int(rng.integers(1, 6))
            padding = radius + int(rng.integers(0, 4))
            channels = int(rng.choice([1, 1, 3]))
            kern = ConvKernel(radius,
                              rng.random((2 * radius + 1,) * 2).astype(np.float32))
            img = ImageBuffer(rng.random((height, width, channels)).astype(np.float32))
            whole = conv2d_apply(img, kern)
            plan = plan_tiling(width, height, tile, padding_size=padding,
                               force="adjacent")
            tiled, _ = apply_plan(img.data, ConvProcessor(kern), plan)
            worst = max(worst, float(np.abs(tiled - whole.data).max()))
        elapsed = time.perf_counter() - start
        assert worst <= 1e-6, f"worst abs error {worst}"
        assert elapsed <= 60.0, f"took {elapsed:.1f} s"


def test_criterion_02_pixel_overhead_model():
    with criterion(2, "pixels at 50% / 0% overlap within 5% of 4.0; "
                      "adjacent padding <= 1.3x at 6% padding"):
        img = textured_image(1024, 1024, 1, seed=7)
        records = sweep(img.data, IdentityProcessor(), [32], [0.0, 0.5])
        grid = {r.overlap_ratio: r for r in records if r.strategy == "small_overlap"}
        ratio = grid[0.5].pixels_processed / grid[0.0].pixels_processed
        assert abs(ratio - 4.0) <= 0.05 * 4.0, f"measured {ratio:.3f}"
        adjacent = [r for r in records if r.strategy == "adjacent_padding"][0]
        overhead = adjacent.pixels_processed / (1024 * 1024)
        assert overhead <= 1.3, f"adjacent overhead {overhead:.4f}"
        assert overhead == pytest.approx(
            adjacent_overhead_ratio(32, default_padding_size(32)), abs=1e-12)


@pytest.fixture(scope="module")
def strategy_runs(corpus_512):
    """Per image: PSNR vs oracle for each padding mode, the 50%-overlap
    baseline, and seam energies for the regression criterion."""
    kern = ConvKernel.gaussian(3, 1.5)
    proc = ConvProcessor(kern)
    tile = 128
    pad = default_padding_size(tile)
    plan = plan_tiling(512, 512, tile, padding_size=pad, force="adjacent")
    plan50 = plan_tiling(512, 512, tile, overlap_ratio=0.5, force="overlap")
    rows = []
    for img in corpus_512:
        oracle = conv2d_apply(img, kern)
        outs = {}
        for mode in (PaddingMode.ADJACENT, PaddingMode.REFLECT, PaddingMode.ZERO):
            arr, _ = apply_plan(img.data, proc, plan, padding_mode=mode)
            outs[mode] = ImageBuffer(arr)
        arr50, _ = apply_plan(img.data, proc, plan50)
        rows.append({
            "psnr_adjacent": psnr(outs[PaddingMode.ADJACENT], oracle),
            "psnr_reflect": psnr(outs[PaddingMode.REFLECT], oracle),
            "psnr_zero": psnr(outs[PaddingMode.ZERO], oracle),
            "psnr_overlap50": psnr(ImageBuffer(arr50), oracle),
            "seam_adjacent": seam_energy(outs[PaddingMode.ADJACENT], plan),
            "seam_zero": seam_energy(outs[PaddingMode.ZERO], plan),
        })
    return rows


def test_criterion_03_padding_quality_ordering(strategy_runs):
    with criterion(3, "per-image PSNR: adjacent >= reflect >= zero, and "
                      "adjacent >= 99% of the 50%-overlap upper bound"):
        for i, row in enumerate(strategy_runs):
            assert row["psnr_adjacent"] >= row["psnr_reflect"] >= row["psnr_zero"], (
                f"image {i}: {row}")
            assert row["psnr_adjacent"] >= 0.99 * row["psnr_overlap50"], (
                f"image {i}: {row}")


def test_criterion_04_cfg_identities():
    with criterion(4, "guidance combination: telescoping exact, degenerate "
                      "exact, linear over 100 random triples to 1e-6"):
        rng = np.random.default_rng(11)
        shape = (6, 5, 4)
        for _ in range(20):
            f_null = LatentGrid(rng.standard_normal(shape))
            f_img = LatentGrid(rng.standard_normal(shape))
            f_full = LatentGrid(rng.standard_normal(shape))
            out = cfg_combine(f_null, f_img, f_full, GuidanceWeights(1.0, 1.0))
            assert np.array_equal(out.data, f_full.data)
            v = LatentGrid(rng.standard_normal(shape))
            w = GuidanceWeights(float(rng.uniform(0.1, 9)), float(rng.uniform(0.1, 9)))
            assert np.array_equal(cfg_combine(v, v, v, w).data, v.data)
        for _ in range(100):
            w = GuidanceWeights(float(rng.uniform(0.1, 9)), float(rng.uniform(0.1, 9)))
            t1 = [LatentGrid(rng.standard_normal(shape)) for _ in range(3)]
            t2 = [LatentGrid(rng.standard_normal(shape)) for _ in range(3)]
            a, b = float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2))
            mixed = cfg_combine(
                *[LatentGrid(a * x.data + b * y.data) for x, y in zip(t1, t2)], w)
            expect = a * cfg_combine(*t1, w).data + b * cfg_combine(*t2, w).data
            assert np.abs(mixed.data - expect).max() <= 1e-6


def test_criterion_05_schedule_snr():
    with criterion(5, "SNR strictly decreasing on a 1000-point grid; "
                      "SNR(1) <= 1e-6"):
        sched = schedule_cosine()
        snr = sched.snr(np.linspace(0.0, 1.0, 1000))
        assert np.all(np.diff(snr) < 0.0)
        assert float(sched.snr(1.0)) <= 1e-6


def test_criterion_06_projection_training(edge_corpus_256):
    with criterion(6, "gradients match finite differences (rel err <= 1e-3); "
                      "trained beats bilinear+bicubic; realizable corpus "
                      "reaches <= 1e-5 in <= 50 epochs"):
        # 6a: finite differences on a margin-valid random small model
        rng = np.random.default_rng(8)
        z = LatentGrid(rng.uniform(0.2, 0.8, size=(3, 4, 2)))
        target = rng.uniform(0.0, 1.0, size=(6, 8, 2))
        model = None
        for seed in range(200):
            cand = new_projection_model(scale=2, blocks=3, width=3, channels=2,
                                        seed=seed, init_scale=1.0)
            bias_rng = np.random.default_rng(seed)
            for layer in cand.weights.layers:
                layer.weights *= 0.1
            for layer in cand.weights.layers[:-1]:
                layer.bias[:] = bias_rng.choice([-0.4, 0.4], size=layer.bias.shape)
            _, pre_acts, _ = _forward_cached(z.data, cand)
            if min(np.abs(pre).min() for _, pre in pre_acts[:-1]) > 0.05:
                model = cand
                break
        assert model is not None

        def loss():
            _, _, y = _forward_cached(z.data, model)
            d = y - target
            return float(np.mean(d * d))

        _, _, y = _forward_cached(z.data, model)
        grads, _ = project_backward(z, model, (2.0 / y.size) * (y - target))
        h = 1e-3
        for li, layer in enumerate(model.weights.layers):
            for arr, g in ((layer.weights, grads[li][0]), (layer.bias, grads[li][1])):
                it = np.nditer(arr, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    keep = arr[idx]
                    arr[idx] = keep + h
                    lp = loss()
                    arr[idx] = keep - h
                    lm = loss()
                    arr[idx] = keep
                    fd = (lp - lm) / (2 * h)
                    rel = abs(fd - g[idx]) / max(abs(fd) + abs(g[idx]), 1e-8)
                    assert rel <= 1e-3, f"layer {li} index {idx}"

        # 6b: trained projection beats linear upsampling on held-out pairs
        ae = AutoencoderStub()
        pairs = build_projection_corpus(edge_corpus_256, ae, s=4)
        train, val = pairs[:48], pairs[48:]
        trained = train_projection(
            train, TrainConfig(epochs=80, batch_size=8, learning_rate=2e-3, seed=3),
            val_corpus=val)
        trained_mse = _corpus_mse(trained, val)

        def baseline(kind):
            errs = []
            for lo, hi in val:
                up = linear_upsample_baseline(lo, 4, kind)
                errs.append(float(np.mean(
                    (up.data.astype(np.float64) - hi.data.astype(np.float64)) ** 2)))
            return float(np.mean(errs))

        assert trained_mse < baseline("bilinear"), "must beat bilinear"
        assert trained_mse < baseline("bicubic"), "must beat bicubic"

        # 6c: realizable target converges fast
        rng2 = np.random.default_rng(11)
        lows = [LatentGrid(rng2.standard_normal((8, 8, 4)).astype(np.float32))
                for _ in range(12)]
        realizable = [(lo, LatentGrid(nearest_upsample(lo.data, 4))) for lo in lows]
        start = time.perf_counter()
        fitted = train_projection(
            realizable,
            TrainConfig(learning_rate=5e-3, epochs=50, batch_size=4, seed=1),
            model=new_projection_model(seed=9, init_scale=1.0))
        elapsed = time.perf_counter() - start
        assert _corpus_mse(fitted, realizable) <= 1e-5
        assert elapsed <= 300.0, f"training took {elapsed:.0f} s"


def test_criterion_07_loss_arithmetic():
    with criterion(7, "total-loss affine identity exact; PAR counting exact; "
                      "calibrated filter drops 15% +- 1 of 100 samples"):
        rng = np.random.default_rng(42)
        for _ in range(50):
            l_ldm = float(rng.uniform(0, 2))
            l_hallu = float(rng.uniform(0, 2))
            lam = float(rng.uniform(0, 5))
            terms = total_loss(l_ldm, l_hallu, lam)
            assert terms.total == l_ldm + lam * l_hallu

        mask = np.zeros(400)
        mask[:100] = 0.9
        assert par(mask.reshape(20, 20), 0.5) == 0.25

        samples = []
        for i, density in enumerate(np.linspace(0.002, 0.25, 100)):
            img = textured_image(32, 32, 1, seed=500 + i).data.copy()
            n = int(density * img.size)
            idx = rng.choice(img.size, size=n, replace=False)
            img.ravel()[idx] = rng.choice([0.0, 1.0], size=n)
            buf = ImageBuffer(img)
            samples.append(TrainingSample(f"n{i:03d}", buf, buf))
        pars = [par(residual_artifact_detector(s)) for s in samples]
        threshold = calibrate_threshold(pars, 0.15)
        result = filter_dataset(samples, residual_artifact_detector, threshold)
        assert abs(len(result.dropped) - 15) <= 1, f"dropped {len(result.dropped)}"


def test_criterion_08_breakdown_arithmetic():
    with criterion(8, "stage speedups 3.12 x 15.35 x 1.16 multiply to 55.56, "
                      "within 0.5 of the rounded 55.8"):
        report = breakdown_report([("tiling", 3.12), ("decomposition", 15.35),
                                   ("projection", 1.16)])
        assert report.cumulative == pytest.approx(3.12 * 15.35 * 1.16, rel=1e-12)
        assert report.cumulative == pytest.approx(55.56, abs=0.01)  # 55.55472
        assert abs(report.cumulative - 55.8) < 0.5


def test_criterion_09_seam_regression(strategy_runs):
    with criterion(9, "zero padding at 0% overlap produces strictly more seam "
                      "energy than adjacent padding on >= 95% of the corpus"):
        wins = sum(1 for row in strategy_runs
                   if row["seam_zero"] > row["seam_adjacent"])
        assert wins >= 0.95 * len(strategy_runs), f"{wins}/{len(strategy_runs)}"


def test_criterion_10_pipeline_end_to_end():
    with criterion(10, "2048px pipeline: bit-identical across two runs, "
                       "3-stage report, stage-1 latent within 64x64x4"):
        img = textured_image(2048, 2048, 3, seed=77)
        cfg = PipelineConfig.from_json({
            "seed": 5,
            "edit": {"strength": 0.5, "steps": 4, "s_img": 1.5, "s_txt": 7.5},
            "projection": {"scale": 4},
            "upscale": {"processor": "identity", "tile_size": 512},
        })
        cond = Conditioning(text=np.array([0.2, -0.1, 0.05, 0.3]))
        out1, report1 = run_pipeline(img, cfg, cond)
        out2, report2 = run_pipeline(img, cfg, cond)
        assert np.array_equal(out1.data, out2.data)
        assert out1.shape == (2048, 2048, 3)
        assert [s.name for s in report1.stages] == ["edit", "project", "upscale"]
        h, w, c = report1.latent_shape
        assert h <= 64 and w <= 64 and c <= 4
        assert report1.plan_summary["strategy"] == "adjacent_padding"
