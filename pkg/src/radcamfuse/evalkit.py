"""Decode detection maps and score detection / free-space predictions."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .datamodel import PolarGridSpec, VehicleLabel, polar_to_cartesian

BOX_WIDTH = 1.8   # lateral, m
BOX_LENGTH = 4.0  # longitudinal, m
DEFAULT_CONF_THRESHOLD = 0.2


@dataclass(frozen=True)
class Detection:
    range: float
    azimuth: float
    confidence: float


def decode_detections(cls_map, reg_map, grid: PolarGridSpec,
                      conf_threshold: float = DEFAULT_CONF_THRESHOLD) -> list[Detection]:
    """Local maxima of the 3x3 neighbourhood above threshold, refined by the regression map.

    Equal neighbours are resolved in favour of the lower range bin, then the lower azimuth bin.
    """
    c = np.asarray(cls_map, dtype=np.float64).reshape(grid.shape)
    reg = np.asarray(reg_map, dtype=np.float64).reshape((2,) + grid.shape)
    padded = np.pad(c, 1, constant_values=-np.inf)
    R, A = c.shape
    keep = c >= conf_threshold
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nb = padded[1 + di:1 + di + R, 1 + dj:1 + dj + A]
            later = di > 0 or (di == 0 and dj > 0)
            keep &= (c > nb) | ((c == nb) & later)
    ii, jj = np.nonzero(keep)
    dets = [Detection(float(grid.range_center(i) + reg[0, i, j] * grid.range_res),
                      float(grid.azimuth_center(j) + reg[1, i, j] * grid.azimuth_res),
                      float(c[i, j]))
            for i, j in zip(ii, jj)]
    dets.sort(key=lambda d: -d.confidence)
    return dets


def box_iou(a: tuple[float, float], b: tuple[float, float],
            width: float = BOX_WIDTH, length: float = BOX_LENGTH) -> float:
    """IoU of two equal axis-aligned boxes centred at Cartesian points a and b."""
    ix = max(0.0, width - abs(a[0] - b[0]))
    iy = max(0.0, length - abs(a[1] - b[1]))
    inter = ix * iy
    return inter / (2 * width * length - inter)


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: list = field(default_factory=list)  # (pred index, label index)
    range_errors: list = field(default_factory=list)
    azimuth_errors: list = field(default_factory=list)

    @property
    def re(self) -> float:
        return float(np.mean(self.range_errors)) if self.range_errors else 0.0

    @property
    def ae(self) -> float:
        return float(np.mean(self.azimuth_errors)) if self.azimuth_errors else 0.0


def iou_matrix(preds, gts) -> np.ndarray:
    pc = [polar_to_cartesian(p.range, p.azimuth) for p in preds]
    gc = [polar_to_cartesian(g.range, g.azimuth) for g in gts]
    return np.array([[box_iou(p, g) for g in gc] for p in pc]).reshape(len(pc), len(gc))


def match_and_score(preds, gts, iou_threshold: float = 0.5) -> MatchResult:
    """Greedy matching in descending confidence; each label is matched at most once."""
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    ious = iou_matrix(preds, gts)
    taken = np.zeros(len(gts), dtype=bool)
    res = MatchResult(0, 0, 0)
    for i in order:
        cand = np.where(taken, -1.0, ious[i]) if len(gts) else np.array([])
        if len(cand) and cand.max() >= iou_threshold:
            j = int(cand.argmax())
            taken[j] = True
            res.pairs.append((i, j))
            res.range_errors.append(abs(preds[i].range - gts[j].range))
            res.azimuth_errors.append(abs(preds[i].azimuth - gts[j].azimuth))
        else:
            res.fp += 1
    res.tp = len(res.pairs)
    res.fn = len(gts) - res.tp
    return res


def f1_score(ap: float, ar: float) -> float:
    return 2 * ap * ar / (ap + ar) if ap + ar > 0 else 0.0


def ap_ar_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall and F1 in percent at a single confidence threshold."""
    ap = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    ar = 100.0 * tp / (tp + fn) if tp + fn else 100.0
    return ap, ar, f1_score(ap, ar)


def miou(seg_pred, gt_mask, grid: PolarGridSpec, max_range: float = 50.0,
         binarize_threshold: float = 0.5, two_class: bool = False) -> float:
    """Free-space IoU inside the first ``max_range`` metres."""
    n = int(math.floor((max_range - grid.range_min) / grid.range_res + 1e-9))
    p = np.asarray(seg_pred).reshape(grid.shape)[:n] >= binarize_threshold
    g = np.asarray(gt_mask).reshape(grid.shape)[:n].astype(bool)

    def iou(a, b):
        union = np.logical_or(a, b).sum()
        return 1.0 if union == 0 else float(np.logical_and(a, b).sum() / union)

    if two_class:
        return 0.5 * (iou(p, g) + iou(~p, ~g))
    return iou(p, g)


@dataclass
class MetricsReport:
    ap: float | None = None
    ar: float | None = None
    f1: float | None = None
    re: float | None = None
    ae: float | None = None
    miou: float | None = None
    fps: list = field(default_factory=list)
    avg_fps: float | None = None
    sigma_fps: float | None = None
    param_count: int | None = None
    model_size_bytes: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)


class Scorer:
    """Accumulates per-frame results into dataset-level metrics."""

    def __init__(self, det_grid: PolarGridSpec, seg_grid: PolarGridSpec,
                 conf_threshold: float = DEFAULT_CONF_THRESHOLD, iou_threshold: float = 0.5,
                 max_range: float = 50.0):
        self.det_grid, self.seg_grid = det_grid, seg_grid
        self.conf_threshold, self.iou_threshold = conf_threshold, iou_threshold
        self.max_range = max_range
        self.tp = self.fp = self.fn = 0
        self.range_errors: list[float] = []
        self.azimuth_errors: list[float] = []
        self.ious: list[float] = []

    def add_detection(self, cls_map, reg_map, labels) -> list[Detection]:
        dets = decode_detections(cls_map, reg_map, self.det_grid, self.conf_threshold)
        m = match_and_score(dets, list(labels), self.iou_threshold)
        self.tp += m.tp
        self.fp += m.fp
        self.fn += m.fn
        self.range_errors += m.range_errors
        self.azimuth_errors += m.azimuth_errors
        return dets

    def add_segmentation(self, seg_pred, gt_mask) -> float:
        v = miou(seg_pred, gt_mask, self.seg_grid, self.max_range)
        self.ious.append(v)
        return v

    def report(self, detection: bool = True, segmentation: bool = True) -> MetricsReport:
        r = MetricsReport()
        if detection:
            r.ap, r.ar, r.f1 = ap_ar_f1(self.tp, self.fp, self.fn)
            r.re = float(np.mean(self.range_errors)) if self.range_errors else 0.0
            r.ae = float(np.mean(self.azimuth_errors)) if self.azimuth_errors else 0.0
        if segmentation:
            r.miou = float(np.mean(self.ious)) if self.ious else None
        return r
