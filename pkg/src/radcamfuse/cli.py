"""Command line: generate, train, eval, infer, bench."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import RadCamFuseError, ShapeError

log = logging.getLogger("radcamfuse")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML/JSON run config; unknown keys are rejected")
    p.add_argument("--dataset", help="dataset root directory")
    p.add_argument("--checkpoint", help="checkpoint file")
    p.add_argument("--mode", choices=["fusion", "camera_only", "radar_only"])
    p.add_argument("--tasks", choices=["detection", "segmentation", "multitask"])
    p.add_argument("--variational", choices=["on", "off"])
    p.add_argument("--width-mult", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--conf-threshold", type=float)
    p.add_argument("--out", help="output path (report, predictions or run directory)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radcamfuse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    _common(g)
    g.add_argument("--n-frames", type=int)
    g.add_argument("--preset", choices=["canonical", "small"])

    t = sub.add_parser("train", help="train a model; --checkpoint resumes")
    _common(t)
    t.add_argument("--epochs", type=int)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--prefetch", type=int)

    for name, help_ in (("eval", "accuracy metrics on a split"), ("bench", "throughput on a split")):
        e = sub.add_parser(name, help=help_)
        _common(e)
        e.add_argument("--split", default="test")

    i = sub.add_parser("infer", help="detections and free space for frames")
    _common(i)
    i.add_argument("--split", default="test")
    i.add_argument("--rd", help="single RD file (RDF1 format) instead of a dataset")
    i.add_argument("--image", help="PNG or .npy float raster matching the checkpoint geometry")
    return parser


def _config(args):
    variational = None if args.variational is None else args.variational == "on"
    overrides = dict(mode=args.mode, tasks=args.tasks, variational=variational,
                     width_mult=args.width_mult, seed=args.seed,
                     conf_threshold=args.conf_threshold, dataset=args.dataset,
                     checkpoint=args.checkpoint, out=args.out)
    for key in ("epochs", "max_steps", "batch_size", "lr", "prefetch"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    cfg = load_config(args.config, **overrides)
    if args.command == "generate":
        gen = cfg.generate.model_copy(update={
            k: v for k, v in (("n_frames", args.n_frames), ("preset", args.preset),
                              ("data_seed", args.seed)) if v is not None})
        cfg = cfg.model_copy(update={"generate": gen})
    return cfg


def _require(value, flag):
    if value is None:
        raise SystemExit(f"error: {flag} is required")
    return value


def _load_image(path, shape):
    path = Path(path)
    if path.suffix == ".npy":
        img = np.load(path).astype(np.float32)
    else:
        from PIL import Image
        img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32).transpose(2, 0, 1) / 255.0
    if img.shape != shape:
        raise ShapeError(f"image {path} is {img.shape}, checkpoint expects {shape}; resize upstream")
    return img


def _single_frame(args, ckpt):
    from .datamodel import CameraFrame, ComplexRDTensor, FrameSample, FreeSpaceMask
    from .frame_io import read_rd
    from .synth import Geometry
    geom = Geometry.from_dict(ckpt.geometry)
    radar = geom.radar
    rd = read_rd(args.rd) if args.rd else ComplexRDTensor(
        np.zeros((radar.n_rx, radar.range_bins, radar.d_max), np.complex64))
    shape = (3, geom.camera.height, geom.camera.width)
    img = _load_image(args.image, shape) if args.image else np.zeros(shape, np.float32)
    mask = FreeSpaceMask(np.zeros((1,) + geom.segmentation_grid.shape, np.uint8))
    return FrameSample(rd=rd, camera=CameraFrame(img), labels=(), freespace=mask, frame_id=0)


def _emit(payload: dict | list, out) -> None:
    text = json.dumps(payload, indent=1)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        print(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = _config(args)
        if args.command == "generate":
            from .runner import run_generate
            path = run_generate(cfg.generate, _require(cfg.dataset or cfg.out, "--dataset or --out"))
            print(path)
        elif args.command == "train":
            from .training import train
            res = train(cfg, _require(cfg.dataset, "--dataset"), _require(cfg.out, "--out"),
                        resume=cfg.checkpoint)
            print(res.checkpoint)
        elif args.command == "eval":
            from .runner import run_eval
            report = run_eval(_require(cfg.checkpoint, "--checkpoint"),
                              _require(cfg.dataset, "--dataset"), args.split, cfg.conf_threshold)
            _emit(report.to_dict(), cfg.out)
        elif args.command == "bench":
            from .runner import run_bench
            report = run_bench(_require(cfg.checkpoint, "--checkpoint"),
                               _require(cfg.dataset, "--dataset"), args.split)
            _emit(report.to_dict(), cfg.out)
        elif args.command == "infer":
            from .checkpoint import load_checkpoint
            from .frame_io import FrameDataset
            from .runner import run_infer
            ckpt = load_checkpoint(_require(cfg.checkpoint, "--checkpoint"))
            if args.rd or args.image:
                samples = [_single_frame(args, ckpt)]
            else:
                samples = FrameDataset(_require(cfg.dataset, "--dataset or --rd/--image"), args.split)
            _emit(run_infer(ckpt, samples, cfg.conf_threshold), cfg.out)
    except RadCamFuseError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
