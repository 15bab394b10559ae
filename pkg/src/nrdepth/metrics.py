"""Depth error metrics with median scaling, and motion-segmentation metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .embedding import SegmentationMask
from .exceptions import DegenerateGeometryError, DimensionError, DomainError

DEPTH_METRIC_NAMES = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_evaluated: int
    depth_cap: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SegMetrics:
    accuracy: float
    iou: float
    tp: int
    fp: int
    fn: int
    tn: int

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction has {pred.size} values, ground truth {gt.size}")
    return pred, gt


def median_scale(pred, gt) -> tuple[np.ndarray, float]:
    """Rescale ``pred`` by ``median(gt) / median(pred)``; returns the scaled values and the factor."""
    pred, gt = _pair(pred, gt)
    if pred.size == 0:
        raise DimensionError("median scaling needs at least one value")
    med_pred = np.median(pred)
    med_gt = np.median(gt)
    if not med_pred > 0 or not med_gt > 0:
        raise DegenerateGeometryError(
            f"median scaling needs positive medians, got pred {med_pred}, gt {med_gt}")
    s = med_gt / med_pred
    return s * pred, float(s)


def global_median_scale(preds, gts) -> tuple[list, float]:
    """One factor for a whole sequence, from the medians of the pooled values."""
    _, s = median_scale(np.concatenate([np.ravel(p) for p in preds]),
                        np.concatenate([np.ravel(g) for g in gts]))
    return [s * np.asarray(p, dtype=np.float64) for p in preds], s


def depth_metrics(pred, gt, cap: float | None = None) -> DepthMetrics:
    """Standard monocular depth errors; points with ``gt >= cap`` are excluded first."""
    pred, gt = _pair(pred, gt)
    if cap is not None:
        keep = gt < cap
        pred, gt = pred[keep], gt[keep]
    if gt.size == 0:
        raise DimensionError("no points left to evaluate")
    if np.any(gt <= 0) or np.any(pred <= 0):
        raise DomainError("depth metrics need strictly positive predictions and ground truth")
    diff = gt - pred
    ratio = np.maximum(pred / gt, gt / pred)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / gt)),
        sq_rel=float(np.mean(diff ** 2 / gt)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(gt) - np.log(pred)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
        n_evaluated=int(gt.size),
        depth_cap=cap,
    )


def mean_depth_metrics(rows) -> DepthMetrics:
    """Aggregate row: plain mean over views (counts are summed)."""
    rows = list(rows)
    if not rows:
        raise DimensionError("nothing to average")
    means = {name: float(np.mean([getattr(r, name) for r in rows])) for name in DEPTH_METRIC_NAMES}
    return DepthMetrics(**means, n_evaluated=sum(r.n_evaluated for r in rows), depth_cap=rows[0].depth_cap)


def seg_metrics(pred, gt) -> SegMetrics:
    """Accuracy and IoU of the dynamic class.  Two empty dynamic sets give IoU 1."""
    labels = pred.labels if isinstance(pred, SegmentationMask) else pred
    p = np.asarray(labels, dtype=bool).ravel()
    g = np.asarray(gt, dtype=bool).ravel()
    if p.shape != g.shape:
        raise DimensionError(f"prediction has {p.size} labels, ground truth {g.size}")
    tp = int(np.sum(p & g))
    fp = int(np.sum(p & ~g))
    fn = int(np.sum(~p & g))
    tn = int(np.sum(~p & ~g))
    union = tp + fp + fn
    return SegMetrics(
        accuracy=(tp + tn) / p.size if p.size else 1.0,
        iou=tp / union if union else 1.0,
        tp=tp, fp=fp, fn=fn, tn=tn,
    )
