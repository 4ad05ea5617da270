"""IoU and greedy non-maximum suppression."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numba
import numpy as np

from rmopp.errors import ConfigError
from rmopp.model import BBox, Detection, DetectionArrays


@dataclass(frozen=True)
class NmsConfig:
    """Greedy NMS settings.

    Attributes:
        eta: a box is suppressed when its IoU with a kept, higher-ranked box
            is strictly greater than ``eta``.
        class_wise: suppress only within the same top class.
        rank_by: ``"score"`` ranks by p1 * objectness, ``"objectness"`` by
            objectness alone.
    """

    eta: float = 0.5
    class_wise: bool = True
    rank_by: Literal["score", "objectness"] = "score"

    def __post_init__(self):
        if not (0.0 < self.eta <= 1.0):
            raise ConfigError(f"NMS threshold must lie in (0, 1], got {self.eta!r}")
        if self.rank_by not in ("score", "objectness"):
            raise ConfigError(f"unknown rank_by {self.rank_by!r}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two corner-form boxes.

    >>> round(iou((0, 0, 2, 2), (1, 1, 3, 3)), 6)
    0.142857
    """
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


@numba.njit(cache=True)
def _iou_rows(a: np.ndarray, i: int, b: np.ndarray, j: int) -> float:
    # Same operation order as iou() so both paths round identically.
    iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
    ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1]) + (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1]) - inter
    return inter / union


@numba.njit(cache=True)
def _nms_kernel(boxes, rank, classes, offsets, active, eta, class_wise):
    keep = np.zeros(len(rank), dtype=np.bool_)
    for s in range(len(offsets) - 1):
        lo, hi = offsets[s], offsets[s + 1]
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
            neg[a] = -rank[idx[a]]
        order = idx[np.argsort(neg, kind="mergesort")]
        if class_wise:
            # stable regroup by class; suppression never crosses a run
            order = order[np.argsort(classes[order], kind="mergesort")]
        suppressed = np.zeros(k, dtype=np.bool_)
        run_end = k
        for a in range(k):
            i = order[a]
            if class_wise and (a == 0 or classes[order[a - 1]] != classes[i]):
                run_end = a + 1
                while run_end < k and classes[order[run_end]] == classes[i]:
                    run_end += 1
            if suppressed[a]:
                continue
            keep[i] = True
            for b in range(a + 1, run_end):
                if suppressed[b]:
                    continue
                if _iou_rows(boxes, i, boxes, order[b]) > eta:
                    suppressed[b] = True
    return keep


def rank_values(arr: DetectionArrays, cfg: NmsConfig) -> np.ndarray:
    return arr.score if cfg.rank_by == "score" else arr.objectness


def nms_keep(arr: DetectionArrays, active: np.ndarray, cfg: NmsConfig, rank: np.ndarray | None = None) -> np.ndarray:
    """Boolean keep-mask after per-segment greedy NMS over the ``active`` rows.

    Segments are the images delimited by ``arr.offsets``; boxes in
    different segments never suppress each other.
    """
    if rank is None:
        rank = rank_values(arr, cfg)
    return _nms_kernel(arr.boxes, rank, arr.top_class, arr.offsets, active, cfg.eta, cfg.class_wise)


def ranked_order(rank: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """``indices`` sorted by descending rank, ties by ascending index."""
    indices = np.asarray(indices, dtype=np.int64)
    return indices[np.argsort(-rank[indices], kind="stable")]


def greedy_nms(dets: Sequence[Detection], cfg: NmsConfig = NmsConfig()) -> list[Detection]:
    """Greedy NMS over detections of a single image.

    Kept detections are returned by descending rank (legacy score by
    default), ties broken by input position.
    """
    if not dets:
        return []
    arr = DetectionArrays.from_detections(dets)
    rank = rank_values(arr, cfg)
    keep = nms_keep(arr, np.ones(len(arr), dtype=np.bool_), cfg, rank)
    return [dets[i] for i in ranked_order(rank, np.flatnonzero(keep))]
