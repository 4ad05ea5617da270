"""Detection/ground-truth matching, precision/recall/F1 and COCO-style AP.

Matching rule: within an image, detections are visited by descending
legacy score (ties by input position); each one claims the still-unmatched
ground truth of its top class with the highest IoU, provided that IoU is
strictly greater than the threshold.  IoU ties go to the earlier ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Literal, Mapping, Sequence

import numba
import numpy as np

from rmopp.geometry import _iou_rows
from rmopp.model import Detection, DetectionArrays, GroundTruthArrays, GroundTruthBox, pack_dataset

COCO_IOU_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
RECALL_GRID = np.arange(101, dtype=np.float64) / 100.0

Interpolation = Literal["coco101", "exact"]


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int

    @property
    def num_detections(self) -> int:
        return self.tp + self.fp

    @property
    def num_ground_truth(self) -> int:
        return self.tp + self.fn


@dataclass(frozen=True)
class PrfScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ApReport:
    ap_per_iou: dict[float, float]
    ap_50_95: float
    ap_50: float
    ap_75: float

    def to_dict(self) -> dict:
        return {
            "ap_50_95": self.ap_50_95,
            "ap_50": self.ap_50,
            "ap_75": self.ap_75,
            "ap_per_iou": {f"{k:.2f}": v for k, v in self.ap_per_iou.items()},
        }


@numba.njit(cache=True)
def _match_kernel(det_boxes, det_rank, det_cls, det_offsets, active, gt_boxes, gt_cls, gt_offsets, thresh):
    matched = np.full(len(det_rank), -1, dtype=np.int64)
    for s in range(len(det_offsets) - 1):
        lo, hi = det_offsets[s], det_offsets[s + 1]
        glo, ghi = gt_offsets[s], gt_offsets[s + 1]
        if ghi == glo:
            continue
        idx = np.empty(hi - lo, dtype=np.int64)
        k = 0
        for i in range(lo, hi):
            if active[i]:
                idx[k] = i
                k += 1
        if k == 0:
            continue
        idx = idx[:k]
        neg = np.empty(k, dtype=np.float64)
        for a in range(k):
            neg[a] = -det_rank[idx[a]]
        order = idx[np.argsort(neg, kind="mergesort")]
        used = np.zeros(ghi - glo, dtype=np.bool_)
        for a in range(k):
            i = order[a]
            best = -1
            best_iou = thresh
            for g in range(glo, ghi):
                if used[g - glo] or gt_cls[g] != det_cls[i]:
                    continue
                v = _iou_rows(det_boxes, i, gt_boxes, g)
                if v > best_iou:
                    best_iou = v
                    best = g
            if best >= 0:
                used[best - glo] = True
                matched[i] = best
    return matched


def match_arrays(
    det: DetectionArrays, gt: GroundTruthArrays, iou_thresh: float, active: np.ndarray | None = None
) -> np.ndarray:
    """Index of the matched ground-truth row for every detection row, -1 if none."""
    if active is None:
        active = np.ones(len(det), dtype=np.bool_)
    return _match_kernel(
        det.boxes, det.score, det.top_class, det.offsets, active,
        gt.boxes, gt.class_index, gt.offsets, float(iou_thresh),
    )


def match_detections(
    dets: Mapping[Hashable, Sequence[Detection]],
    gts: Mapping[Hashable, Sequence[GroundTruthBox]],
    iou_thresh: float = 0.5,
) -> MatchCounts:
    """Aggregate TP/FP/FN over all images."""
    _, det_arr, gt_arr = pack_dataset(dets, gts)
    matched = match_arrays(det_arr, gt_arr, iou_thresh)
    tp = int(np.count_nonzero(matched >= 0))
    return MatchCounts(tp, len(det_arr) - tp, len(gt_arr) - tp)


def f1_score(precision: float, recall: float) -> float:
    s = precision + recall
    return 0.0 if s == 0 else 2.0 * precision * recall / s


def prf(c: MatchCounts) -> PrfScores:
    """Precision, recall and F1; any 0/0 ratio is reported as 0."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    return PrfScores(precision, recall, f1_score(precision, recall))


def average_precision(is_tp: np.ndarray, num_gt: int, interpolation: Interpolation = "coco101") -> float:
    """AP of a ranked list of TP/FP flags against ``num_gt`` ground truths.

    ``coco101`` samples the interpolated precision envelope at recall
    0.00, 0.01, ..., 1.00; ``exact`` integrates the envelope over the
    recall steps actually reached.
    """
    if num_gt <= 0:
        raise ValueError("AP is undefined without ground truth")
    is_tp = np.asarray(is_tp, dtype=bool)
    if is_tp.size == 0:
        return 0.0
    tp = np.cumsum(is_tp)
    fp = np.cumsum(~is_tp)
    recall = tp / num_gt
    precision = tp / (tp + fp)
    # envelope: best precision at any recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if interpolation == "coco101":
        pos = np.searchsorted(recall, RECALL_GRID, side="left")
        sampled = np.zeros_like(RECALL_GRID)
        ok = pos < len(recall)
        sampled[ok] = envelope[pos[ok]]
        return float(sampled.mean())
    if interpolation == "exact":
        steps = np.diff(np.concatenate(([0.0], recall)))
        return float(np.sum(steps * envelope))
    raise ValueError(f"unknown interpolation {interpolation!r}")


def _ap_from_arrays(
    det: DetectionArrays, gt: GroundTruthArrays, iou_thresh: float, interpolation: Interpolation
) -> dict[int, float]:
    matched = match_arrays(det, gt, iou_thresh)
    score = det.score
    out: dict[int, float] = {}
    for c in np.unique(gt.class_index):
        num_gt = int(np.count_nonzero(gt.class_index == c))
        rows = np.flatnonzero(det.top_class == c)
        rows = rows[np.argsort(-score[rows], kind="stable")]
        out[int(c)] = average_precision(matched[rows] >= 0, num_gt, interpolation)
    return out


def ap_per_class(
    dets: Mapping[Hashable, Sequence[Detection]],
    gts: Mapping[Hashable, Sequence[GroundTruthBox]],
    iou_thresh: float = 0.5,
    interpolation: Interpolation = "coco101",
) -> dict[int, float]:
    """Per-class AP; classes without any ground truth are omitted."""
    _, det_arr, gt_arr = pack_dataset(dets, gts)
    return _ap_from_arrays(det_arr, gt_arr, iou_thresh, interpolation)


def coco_ap(
    dets: Mapping[Hashable, Sequence[Detection]],
    gts: Mapping[Hashable, Sequence[GroundTruthBox]],
    interpolation: Interpolation = "coco101",
) -> ApReport:
    """Class-mean AP at IoU 0.50:0.05:0.95 and their mean."""
    _, det_arr, gt_arr = pack_dataset(dets, gts)
    per_iou = {}
    for t in COCO_IOU_THRESHOLDS:
        per_class = _ap_from_arrays(det_arr, gt_arr, t, interpolation)
        per_iou[t] = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return ApReport(per_iou, float(np.mean(list(per_iou.values()))), per_iou[0.5], per_iou[0.75])
