"""Dataset generation, evaluation, benchmarking and inference entry points."""
from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint
from .config import GenerateConfig
from .datamodel import FrameSample, encode_detection_targets
from .errors import EmptyDataset
from .evalkit import MetricsReport, Scorer, decode_detections
from .frame_io import FrameDataset, ManifestWriter
from .nn import DetectionPrediction, SegmentationPrediction, count_parameters
from .nn.layers import rearrange_complex
from .synth import Geometry, frame_seed, synthesize_frame
from .training import model_from_checkpoint


def split_counts(n: int, ratios: dict[str, float]) -> dict[str, int]:
    """Largest-remainder apportionment of n frames over the named splits."""
    raw = {k: n * r for k, r in ratios.items()}
    counts = {k: int(np.floor(v)) for k, v in raw.items()}
    rest = n - sum(counts.values())
    for k in sorted(raw, key=lambda k: (-(raw[k] - counts[k]), list(ratios).index(k)))[:rest]:
        counts[k] += 1
    return counts


def run_generate(gen: GenerateConfig, root) -> Path:
    """Write ``gen.n_frames`` synthetic frames plus a manifest under ``root``."""
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IOError(f"cannot create dataset directory {root}: {e}") from e
    geometry = gen.geometry()
    scene = gen.scene()
    generation = {"config": gen.model_dump(mode="json"), "geometry": geometry.to_dict()}
    writer = ManifestWriter(root, geometry.detection_grid, geometry.segmentation_grid, generation)
    counts = split_counts(gen.n_frames, gen.split_ratios)
    order = np.random.default_rng(gen.data_seed).permutation(gen.n_frames)
    start = 0
    for split, count in counts.items():
        for frame_id in sorted(int(i) for i in order[start:start + count]):
            seed = frame_seed(gen.data_seed, frame_id)
            writer.add(split, synthesize_frame(scene, geometry, seed=seed, frame_id=frame_id))
        start += count
    return writer.close()


class ModelPredictor:
    """Deterministic inference wrapper around a trained network."""

    def __init__(self, model):
        self.model = model.eval()

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint | str | Path) -> "ModelPredictor":
        if not isinstance(ckpt, Checkpoint):
            ckpt = load_checkpoint(ckpt)
        return cls(model_from_checkpoint(ckpt))

    @property
    def config(self):
        return self.model.cfg

    def prepare(self, sample: FrameSample):
        rd = rearrange_complex(np.array(sample.rd.data))[None] if self.config.use_radar else None
        img = torch.from_numpy(np.array(sample.camera.image))[None] if self.config.use_camera else None
        return rd, img

    @torch.no_grad()
    def forward(self, rd, img):
        return self.model(rd, img)

    def predict(self, sample: FrameSample):
        out = self.forward(*self.prepare(sample))
        det = seg = None
        if "cls" in out:
            det = DetectionPrediction(out["cls"][0].numpy(), out["reg"][0].numpy())
        if "seg" in out:
            seg = SegmentationPrediction(out["seg"][0].numpy())
        return det, seg


class OraclePredictor:
    """Emits ground-truth-encoded maps; used to validate the evaluation pathway."""

    def __init__(self, det_grid, detection: bool = True, segmentation: bool = True):
        self.det_grid = det_grid
        self.detection, self.segmentation = detection, segmentation

    def predict(self, sample: FrameSample):
        det = seg = None
        if self.detection:
            t = encode_detection_targets(sample.labels, self.det_grid)
            det = DetectionPrediction(t.cls_map, t.reg_map)
        if self.segmentation:
            seg = SegmentationPrediction(sample.freespace.mask.astype(np.float32))
        return det, seg


def evaluate(predictor, dataset: FrameDataset, conf_threshold: float = 0.2) -> MetricsReport:
    if len(dataset) == 0:
        raise EmptyDataset(f"split {dataset.split!r} has no frames")
    scorer = Scorer(dataset.detection_grid, dataset.segmentation_grid, conf_threshold)
    has_det = has_seg = False
    for sample in dataset:
        det, seg = predictor.predict(sample)
        if det is not None:
            has_det = True
            scorer.add_detection(det.cls, det.reg, sample.labels)
        if seg is not None:
            has_seg = True
            scorer.add_segmentation(seg.seg, sample.freespace.mask)
    return scorer.report(detection=has_det, segmentation=has_seg)


def run_eval(checkpoint, dataset_root, split: str = "test", conf_threshold: float = 0.2) -> MetricsReport:
    predictor = ModelPredictor.from_checkpoint(checkpoint)
    return evaluate(predictor, FrameDataset(dataset_root, split), conf_threshold)


def run_bench(checkpoint, dataset_root, split: str = "test", warmup: int = 1) -> MetricsReport:
    """Per-frame inference timing; FPS statistics, parameter count and model size."""
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    predictor = ModelPredictor.from_checkpoint(ckpt)
    ds = FrameDataset(dataset_root, split)
    if len(ds) == 0:
        raise EmptyDataset(f"split {split!r} has no frames")
    for i in range(min(warmup, len(ds))):
        predictor.forward(*predictor.prepare(ds[i]))
    fps = []
    for sample in ds:
        inputs = predictor.prepare(sample)
        t0 = time.perf_counter()
        predictor.forward(*inputs)
        fps.append(1.0 / (time.perf_counter() - t0))
    return throughput_report(fps, predictor.model, ckpt)


def throughput_report(fps, model, ckpt: Checkpoint) -> MetricsReport:
    arr = np.asarray(fps, dtype=np.float64)
    return MetricsReport(fps=[float(v) for v in arr], avg_fps=float(arr.mean()),
                         sigma_fps=float(arr.std(ddof=0)), param_count=count_parameters(model),
                         model_size_bytes=ckpt.parameter_payload_bytes())


def run_infer(checkpoint, samples, conf_threshold: float = 0.2) -> list[dict]:
    """Detections (and free-space summary) for each frame, as JSON-ready records."""
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    predictor = ModelPredictor.from_checkpoint(ckpt)
    geometry = Geometry.from_dict(ckpt.geometry)
    results = []
    for sample in samples:
        det, seg = predictor.predict(sample)
        rec = {"frame_id": sample.frame_id}
        if det is not None:
            rec["detections"] = [
                {"range_m": d.range, "azimuth_deg": d.azimuth, "confidence": d.confidence}
                for d in decode_detections(det.cls, det.reg, geometry.detection_grid, conf_threshold)]
        if seg is not None:
            mask = (np.asarray(seg.seg) >= 0.5).astype(np.uint8)
            rec["free_space_fraction"] = float(mask.mean())
            rec["free_space_mask"] = mask[0].tolist()
        results.append(rec)
    return results
