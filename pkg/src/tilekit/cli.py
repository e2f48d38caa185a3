"""Command-line front end.

Subcommands: upscale, sweep, pipeline, eval, filter, train-projection.
Every subcommand honours --json for a machine-readable report on stdout.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import losses, metrics, profiler
from .diffusion import Conditioning
from .errors import TilekitError, UsageError
from .imagecore import ImageBuffer, load_image, save_image
from .pipeline import PipelineConfig, make_processor, run_pipeline
from .processors import ConvKernel, ConvProcessor, conv2d_apply
from .projection import AutoencoderStub, TrainConfig, build_projection_corpus, \
    save_projection, train_projection
from .synth import textured_corpus, textured_image
from .tiling import BlendMode, BlendSpec, PaddingMode, apply_plan, \
    default_padding_size, plan_tiling
from .losses import calibrate_threshold, filter_dataset, load_dataset, par, \
    residual_artifact_detector, write_filter_manifest


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tilekit")
    sub = parser.add_subparsers(dest="command", required=True)

    up = sub.add_parser("upscale", help="tiled processing of one image")
    up.add_argument("--in", dest="infile", required=True)
    up.add_argument("--out", dest="outfile", required=True)
    up.add_argument("--tile", type=int, default=512)
    up.add_argument("--pad", type=int, default=None, help="default: 6%% of tile")
    up.add_argument("--overlap", type=float, default=0.25)
    up.add_argument("--proc", default="identity",
                    help="identity | gain:G | nearest:N | box:R | gauss:R:S")
    up.add_argument("--weights", default=None, help="CNN processor weights file")
    up.add_argument("--blend", choices=["linear_feather", "average"], default="linear_feather")
    up.add_argument("--force", choices=["adjacent", "overlap"], default=None)
    up.add_argument("--json", action="store_true")

    sw = sub.add_parser("sweep", help="tile size / overlap cost sweep, CSV to stdout")
    src = sw.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="infile")
    src.add_argument("--size", type=int, help="use a synthetic textured image of this size")
    sw.add_argument("--tiles", default="128,256,512")
    sw.add_argument("--overlaps", default="0,0.25,0.5")
    sw.add_argument("--repeats", type=int, default=1)
    sw.add_argument("--proc", default="identity")
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--out", default=None, help="write CSV here instead of stdout")

    pl = sub.add_parser("pipeline", help="three-stage edit/project/upscale run")
    pl.add_argument("--in", dest="infile", required=True)
    pl.add_argument("--out", dest="outfile", required=True)
    pl.add_argument("--config", required=True, help="pipeline JSON config")
    pl.add_argument("--cond", default=None, help="text conditioning vector (.json or .npy)")
    pl.add_argument("--json", action="store_true")

    ev = sub.add_parser("eval", help="padding strategies vs whole-image oracle")
    ev.add_argument("--in", dest="infile", required=True)
    ev.add_argument("--tile", type=int, default=128)
    ev.add_argument("--pad", type=int, default=None)
    ev.add_argument("--radius", type=int, default=3, help="oracle conv radius")
    ev.add_argument("--csv", default=None)
    ev.add_argument("--json", action="store_true")

    fl = sub.add_parser("filter", help="drop high-artifact samples from a dataset")
    fl.add_argument("--dataset", required=True, help="directory with index.json")
    thr = fl.add_mutually_exclusive_group()
    thr.add_argument("--drop", type=float, default=0.15,
                     help="target drop fraction (threshold is calibrated)")
    thr.add_argument("--threshold", type=float, default=None, help="explicit PAR threshold")
    fl.add_argument("--tau", type=float, default=0.15, help="detector residual threshold")
    fl.add_argument("--manifest", default=None, help="write JSONL manifest here")
    fl.add_argument("--json", action="store_true")

    tp = sub.add_parser("train-projection", help="fit the latent upscaler")
    tsrc = tp.add_mutually_exclusive_group(required=True)
    tsrc.add_argument("--images", help="directory of PNG training images")
    tsrc.add_argument("--synthetic", type=int, help="generate this many textured images")
    tp.add_argument("--size", type=int, default=256, help="synthetic image size")
    tp.add_argument("--scale", type=int, default=4)
    tp.add_argument("--epochs", type=int, default=20)
    tp.add_argument("--batch", type=int, default=4)
    tp.add_argument("--lr", type=float, default=1e-3)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--out", dest="outfile", required=True, help="weights file to write")
    tp.add_argument("--log", default=None, help="training-curve CSV")
    tp.add_argument("--json", action="store_true")

    return parser


def _cmd_upscale(args) -> int:
    img = load_image(args.infile)
    pad = default_padding_size(args.tile) if args.pad is None else args.pad
    proc = make_processor(args.proc, args.weights)
    plan = plan_tiling(img.width, img.height, args.tile, overlap_ratio=args.overlap,
                       padding_size=pad, force=args.force)
    out, stats = apply_plan(img.data, proc, plan, BlendSpec(BlendMode(args.blend)))
    save_image(ImageBuffer(np.clip(out, 0.0, 1.0)), args.outfile)
    report = {
        "input": args.infile, "output": args.outfile,
        "strategy": stats.strategy, "tile_size": args.tile, "padding": pad,
        "tiles": stats.tiles_count, "pixels_processed": stats.pixels_processed,
        "peak_bytes": stats.peak_bytes,
        "output_size": [out.shape[1], out.shape[0]],
    }
    if args.json:
        print(json.dumps(report))
    else:
        print(f"{stats.strategy}: {stats.tiles_count} tiles, "
              f"{stats.pixels_processed} pixels processed -> {args.outfile}")
    return 0


def _cmd_sweep(args) -> int:
    if args.infile:
        img = load_image(args.infile)
    else:
        img = textured_image(args.size, args.size, seed=args.seed)
    tiles = [int(t) for t in args.tiles.split(",") if t]
    overlaps = [float(r) for r in args.overlaps.split(",") if r]
    proc = make_processor(args.proc)
    records = profiler.sweep(img.data, proc, tiles, overlaps, repeats=args.repeats)
    text = profiler.records_to_csv(records)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _load_cond(path) -> np.ndarray:
    if path.endswith(".npy"):
        return np.load(path)
    return np.asarray(json.loads(Path(path).read_text()), dtype=np.float64)


def _cmd_pipeline(args) -> int:
    cfg = PipelineConfig.from_json(args.config)
    img = load_image(args.infile)
    cond = Conditioning(text=_load_cond(args.cond)) if args.cond else None
    out, report = run_pipeline(img, cfg, cond)
    save_image(ImageBuffer(np.clip(out.data, 0.0, 1.0)), args.outfile)
    report.output_path = args.outfile
    if args.json:
        print(report.to_json())
    else:
        for stage in report.stages:
            print(f"{stage.name}: {stage.seconds * 1e3:.1f} ms, peak {stage.peak_bytes} B")
        print(f"-> {args.outfile}")
    return 0


def _cmd_eval(args) -> int:
    img = load_image(args.infile)
    tile = args.tile
    w = (img.width // tile) * tile
    h = (img.height // tile) * tile
    if w < tile or h < tile:
        raise UsageError(f"image {img.width}x{img.height} smaller than one {tile}px tile")
    img = ImageBuffer(img.data[:h, :w].copy())
    pad = default_padding_size(tile) if args.pad is None else args.pad
    kern = ConvKernel.gaussian(args.radius, sigma=max(args.radius / 2.0, 0.5))
    proc = ConvProcessor(kern)
    oracle = conv2d_apply(img, kern)

    rows = []

    def record(strategy_name, out_arr, plan):
        out = ImageBuffer(out_arr)
        rows.append({
            "image_id": Path(args.infile).name,
            "strategy": strategy_name,
            "psnr": metrics.psnr(out, oracle),
            "ssim": metrics.ssim(out, oracle),
            "seam_energy": metrics.seam_energy(out, plan),
        })

    adj_plan = plan_tiling(w, h, tile, padding_size=pad, force="adjacent")
    for name, mode in [("adjacent", PaddingMode.ADJACENT), ("reflect", PaddingMode.REFLECT),
                       ("zero", PaddingMode.ZERO)]:
        out_arr, _ = apply_plan(img.data, proc, adj_plan, padding_mode=mode)
        record(name, out_arr, adj_plan)
    for overlap in (0.25, 0.5):
        plan = plan_tiling(w, h, tile, overlap_ratio=overlap, force="overlap")
        out_arr, _ = apply_plan(img.data, proc, plan)
        record(f"overlap{int(overlap * 100)}", out_arr, plan)

    if args.csv:
        metrics.write_metric_report(rows, args.csv)
    if args.json:
        print(json.dumps(rows))
    else:
        for row in rows:
            print(f"{row['strategy']:>10}: psnr={row['psnr']:.2f} dB "
                  f"ssim={row['ssim']:.4f} seam={row['seam_energy']:.5f}")
    return 0


def _cmd_filter(args) -> int:
    samples = load_dataset(args.dataset)
    detector = lambda s: residual_artifact_detector(s, tau=args.tau)
    if args.threshold is not None:
        threshold = args.threshold
    else:
        pars = [par(detector(s)) for s in samples]
        threshold = calibrate_threshold(pars, args.drop)
    result = filter_dataset(samples, detector, threshold)
    if args.manifest:
        write_filter_manifest(result.records, args.manifest)
    summary = {
        "samples": len(samples), "kept": len(result.kept), "dropped": len(result.dropped),
        "threshold": threshold,
        "drop_fraction": len(result.dropped) / len(samples) if samples else 0.0,
        "manifest": args.manifest,
    }
    if args.json:
        print(json.dumps(summary))
    else:
        print(f"kept {summary['kept']}/{summary['samples']} "
              f"(threshold {threshold:.4f}, dropped {summary['drop_fraction']:.1%})")
    return 0


def _cmd_train_projection(args) -> int:
    if args.images:
        paths = sorted(Path(args.images).glob("*.png"))
        if not paths:
            raise UsageError(f"no .png files under {args.images}")
        images = [load_image(p) for p in paths]
    else:
        images = textured_corpus(args.synthetic, args.size, args.size, seed=args.seed)
    ae = AutoencoderStub()
    corpus = build_projection_corpus(images, ae, s=args.scale)
    n_val = max(1, len(corpus) // 5)
    train, val = corpus[n_val:], corpus[:n_val]
    if not train:
        train, val = corpus, None
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                      batch_size=args.batch, seed=args.seed)
    model = train_projection(train, cfg, val_corpus=val, log_path=args.log)
    save_projection(model, args.outfile)
    last = model.train_history[-1]
    summary = {
        "pairs": len(corpus), "epochs": args.epochs,
        "parameters": model.parameter_count,
        "final_train_mse": last[1], "final_val_mse": last[2],
        "model": args.outfile, "log": args.log,
    }
    if args.json:
        print(json.dumps(summary))
    else:
        print(f"trained {model.parameter_count} parameters on {len(corpus)} pairs; "
              f"train mse {last[1]:.3e} -> {args.outfile}")
    return 0


_COMMANDS = {
    "upscale": _cmd_upscale,
    "sweep": _cmd_sweep,
    "pipeline": _cmd_pipeline,
    "eval": _cmd_eval,
    "filter": _cmd_filter,
    "train-projection": _cmd_train_projection,
}


def cli_main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (TilekitError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
