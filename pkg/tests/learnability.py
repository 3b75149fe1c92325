"""Synthetic learnability protocol: generate, train three variants, evaluate on held-out frames.

Variants: fusion (variational on), camera_only, and fusion with variational sampling off.
Importable from the acceptance tests; also runnable on its own:

    python tests/learnability.py --preset small --out /tmp/learn
"""
from __future__ import annotations

import argparse
import json
import math
import time
from pathlib import Path

import numpy as np
import torch

from radcamfuse.config import GenerateConfig, RunConfig
from radcamfuse.runner import run_eval, run_generate
from radcamfuse.training import BatchLoader, build_model, compute_losses, epoch_batches, geometry_of, train
from radcamfuse.frame_io import FrameDataset

VARIANTS = {
    "fusion": {},
    "camera_only": {"mode": "camera_only"},
    "variational_off": {"variational": False},
}

F1_MIN = 80.0          # percent
MIOU_MIN = 0.85
VARIATIONAL_SLACK = 0.02
RUNTIME_BUDGET_S = 60 * 60


def make_dataset(root, preset: str, n_train: int, n_test: int, seed: int = 0) -> Path:
    n = n_train + n_test
    gen = GenerateConfig(preset=preset, n_frames=n, data_seed=seed,
                         split_ratios={"train": n_train / n, "test": n_test / n})
    run_generate(gen, root)
    return Path(root)


def verdict(results: dict) -> tuple[bool, list[str]]:
    fus, cam, off = results["fusion"], results["camera_only"], results["variational_off"]
    checks = [
        (fus["f1"] >= F1_MIN, f"fusion F1 {fus['f1']:.2f} >= {F1_MIN}"),
        (fus["miou"] >= MIOU_MIN, f"fusion mIoU {fus['miou']:.4f} >= {MIOU_MIN}"),
        (fus["f1"] >= cam["f1"], f"fusion F1 {fus['f1']:.2f} >= camera_only F1 {cam['f1']:.2f}"),
        (fus["miou"] >= off["miou"] - VARIATIONAL_SLACK,
         f"variational mIoU {fus['miou']:.4f} >= off {off['miou']:.4f} - {VARIATIONAL_SLACK}"),
    ]
    return all(ok for ok, _ in checks), [("ok   " if ok else "FAIL ") + msg for ok, msg in checks]


def run_protocol(workdir, preset: str = "canonical", n_train: int = 500, n_test: int = 100,
                 epochs: int = 30, width_mult: float = 0.25, lr: float | None = None,
                 log=print) -> dict:
    workdir = Path(workdir)
    t0 = time.perf_counter()
    data = make_dataset(workdir / "data", preset, n_train, n_test)
    results = {}
    for name, overrides in VARIANTS.items():
        extra = {} if lr is None else {"lr": lr}
        cfg = RunConfig(width_mult=width_mult, epochs=epochs, checkpoint_every=epochs,
                        **overrides, **extra)
        t = time.perf_counter()
        res = train(cfg, data, workdir / name)
        rep = run_eval(res.checkpoint, data, "test", cfg.conf_threshold)
        results[name] = {"f1": rep.f1, "ap": rep.ap, "ar": rep.ar, "miou": rep.miou, "re": rep.re,
                         "ae": rep.ae, "final_l_mtl": res.records[-1]["l_mtl"],
                         "seconds": time.perf_counter() - t}
        log(f"{name}: {json.dumps(results[name])}")
    elapsed = time.perf_counter() - t0
    ok, lines = verdict(results)
    summary = {"preset": preset, "results": results, "elapsed_s": elapsed, "passed": ok, "checks": lines}
    (workdir / "learnability.json").write_text(json.dumps(summary, indent=1))
    return summary


def project_runtime(workdir, preset: str = "canonical", n_train: int = 500, epochs: int = 30,
                    width_mult: float = 0.25, timed_steps: int = 2) -> dict:
    """Time a few real optimizer steps and extrapolate the whole protocol (three variants)."""
    data = make_dataset(Path(workdir) / "probe", preset, 8, 1)
    ds = FrameDataset(data, "train")
    cfg = RunConfig(width_mult=width_mult)
    model = build_model(cfg.model_config_for(geometry_of(ds)), cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    model.train()
    times = []
    batches = epoch_batches(len(ds), cfg.batch_size, cfg.seed, 0) * (timed_steps + 1)
    for i, batch in enumerate(BatchLoader(ds, batches[:timed_steps + 1])):
        t = time.perf_counter()
        losses = compute_losses(model(batch.rd, batch.image), batch, cfg)
        opt.zero_grad()
        losses.l_mtl.backward()
        opt.step()
        if i:  # first step is warm-up
            times.append(time.perf_counter() - t)
    step_s = float(np.mean(times))
    steps = math.ceil(n_train / cfg.batch_size) * epochs
    projected = step_s * steps * len(VARIANTS)
    return {"step_seconds": step_s, "steps_per_variant": steps, "variants": len(VARIANTS),
            "projected_seconds": projected, "budget_seconds": RUNTIME_BUDGET_S,
            "torch_threads": torch.get_num_threads()}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--preset", default="canonical", choices=["canonical", "small"])
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float)
    args = p.parse_args(argv)
    summary = run_protocol(args.out, args.preset, args.n_train, args.n_test, args.epochs, lr=args.lr)
    print("\n".join(summary["checks"]))
    print(f"elapsed {summary['elapsed_s']:.0f} s, passed={summary['passed']}")


if __name__ == "__main__":
    main()
