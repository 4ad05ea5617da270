"""Domain records, validation and the ordered class statistic.

Boxes are always held in corner form ``(x1, y1, x2, y2)``; conversion from
COCO's ``(x, y, w, h)`` happens at ingestion in :mod:`rmopp.formats`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from rmopp.errors import ValidationError

PROB_SUM_TOL = 1e-4
# vectors this close to unit sum are left alone by renormalisation, which
# keeps validation idempotent under repeated division round-off
RENORM_SKIP_TOL = 1e-12

BBox = tuple[float, float, float, float]


@dataclass(frozen=True)
class OrderedClassStats:
    """Top-1 / top-2 class probabilities of one detection."""

    top_class: int
    p1: float
    p2: float


def ordered_stats(probs: Sequence[float]) -> OrderedClassStats:
    """Return the most probable class and the two largest probabilities.

    ``p2`` is taken with multiplicity, so a repeated maximum gives
    ``p2 == p1``.  Ties for the top class go to the lowest index.

    >>> ordered_stats([0.7, 0.2, 0.1])
    OrderedClassStats(top_class=0, p1=0.7, p2=0.2)
    """
    if len(probs) < 2:
        raise ValidationError(f"class probability vector needs at least 2 entries, got {len(probs)}")
    top = 0
    p1 = float(probs[0])
    p2 = -math.inf
    for i in range(1, len(probs)):
        v = float(probs[i])
        if v > p1:
            p2 = p1
            p1 = v
            top = i
        elif v > p2:
            p2 = v
    return OrderedClassStats(top, p1, p2)


@dataclass(frozen=True)
class Detection:
    """One candidate box emitted by a detector.

    ``objectness`` defaults to 1.0 for detectors that do not report a
    box confidence.
    """

    image_id: Hashable
    bbox: BBox
    class_probs: tuple[float, ...]
    objectness: float = 1.0

    @cached_property
    def stats(self) -> OrderedClassStats:
        return ordered_stats(self.class_probs)

    @property
    def top_class(self) -> int:
        return self.stats.top_class

    @property
    def p1(self) -> float:
        return self.stats.p1

    @property
    def p2(self) -> float:
        return self.stats.p2

    @property
    def num_classes(self) -> int:
        return len(self.class_probs)


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: Hashable
    class_index: int
    bbox: BBox


@dataclass(frozen=True)
class Dataset:
    """Detections and annotations keyed by image id.

    An image may appear in only one of the two maps: detections on an image
    without annotations are all false positives, and annotated images
    without detections contribute only false negatives.
    """

    detections: Mapping[Hashable, tuple[Detection, ...]]
    ground_truth: Mapping[Hashable, tuple[GroundTruthBox, ...]]
    num_classes: int

    @property
    def image_ids(self) -> tuple[Hashable, ...]:
        """Annotated images first (in map order), then detection-only images."""
        ids = list(self.ground_truth)
        seen = set(ids)
        ids.extend(k for k in self.detections if k not in seen)
        return tuple(ids)

    @property
    def num_detections(self) -> int:
        return sum(len(v) for v in self.detections.values())

    @property
    def num_ground_truth(self) -> int:
        return sum(len(v) for v in self.ground_truth.values())


def _check_bbox(bbox: Sequence[float], image_id: Hashable, index: int) -> BBox:
    if len(bbox) != 4:
        raise ValidationError(f"bbox needs 4 coordinates, got {len(bbox)}", image_id, index)
    x1, y1, x2, y2 = (float(v) for v in bbox)
    if not all(math.isfinite(v) for v in (x1, y1, x2, y2)):
        raise ValidationError(f"non-finite bbox {bbox!r}", image_id, index)
    if not (x1 < x2 and y1 < y2):
        raise ValidationError(f"degenerate bbox {bbox!r} (need x1 < x2 and y1 < y2)", image_id, index)
    return (x1, y1, x2, y2)


def _check_probs(
    probs: Sequence[float], num_classes: int, renormalize: bool, image_id: Hashable, index: int
) -> tuple[float, ...]:
    if len(probs) != num_classes:
        raise ValidationError(
            f"class_probs has length {len(probs)}, dataset has {num_classes} classes", image_id, index
        )
    values = tuple(float(p) for p in probs)
    for p in values:
        if not math.isfinite(p):
            raise ValidationError(f"non-finite class probability {p!r}", image_id, index)
        if p < 0.0:
            raise ValidationError(f"negative class probability {p!r}", image_id, index)
    total = math.fsum(values)
    if total <= 0.0:
        raise ValidationError("class probabilities sum to zero", image_id, index)
    if renormalize and abs(total - 1.0) > RENORM_SKIP_TOL:
        values = tuple(p / total for p in values)
        total = math.fsum(values)
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValidationError(f"class probabilities sum to {total!r}, expected 1 +/- {PROB_SUM_TOL}", image_id, index)
    if max(values) > 1.0:
        raise ValidationError("class probability above 1", image_id, index)
    return values


def validate_detection(
    det: Detection, num_classes: int, renormalize: bool = False, image_id: Hashable | None = None, index: int = 0
) -> Detection:
    """Check one detection; returns ``det`` itself when nothing changed."""
    image_id = det.image_id if image_id is None else image_id
    if det.image_id != image_id:
        raise ValidationError(f"detection carries image id {det.image_id!r}", image_id, index)
    bbox = _check_bbox(det.bbox, image_id, index)
    probs = _check_probs(det.class_probs, num_classes, renormalize, image_id, index)
    obj = float(det.objectness)
    if not (0.0 <= obj <= 1.0):
        raise ValidationError(f"objectness {det.objectness!r} outside [0, 1]", image_id, index)
    if bbox == det.bbox and probs == det.class_probs and obj == det.objectness and type(det.objectness) is float:
        return det
    return Detection(image_id, bbox, probs, obj)


def validate_ground_truth(gt: GroundTruthBox, num_classes: int, image_id: Hashable | None = None, index: int = 0) -> GroundTruthBox:
    image_id = gt.image_id if image_id is None else image_id
    if gt.image_id != image_id:
        raise ValidationError(f"annotation carries image id {gt.image_id!r}", image_id, index)
    bbox = _check_bbox(gt.bbox, image_id, index)
    cls = gt.class_index
    if isinstance(cls, bool) or int(cls) != cls:
        raise ValidationError(f"class index {cls!r} is not an integer", image_id, index)
    cls = int(cls)
    if not (0 <= cls < num_classes):
        raise ValidationError(f"class index {cls} out of range [0, {num_classes})", image_id, index)
    if bbox == gt.bbox and cls == gt.class_index and type(gt.class_index) is int:
        return gt
    return GroundTruthBox(image_id, cls, bbox)


def validate_dataset(raw: Dataset, renormalize: bool = False) -> Dataset:
    """Return a dataset whose records all satisfy the type invariants.

    With ``renormalize`` each probability vector is divided by its sum
    before the sum check, which accommodates sigmoid-style class heads.
    Validation is idempotent: a valid dataset comes back equal to itself.
    """
    if raw.num_classes < 2:
        raise ValidationError(f"need at least 2 classes, got {raw.num_classes}")
    dets = {
        img: tuple(validate_detection(d, raw.num_classes, renormalize, img, i) for i, d in enumerate(records))
        for img, records in raw.detections.items()
    }
    gts = {
        img: tuple(validate_ground_truth(g, raw.num_classes, img, i) for i, g in enumerate(records))
        for img, records in raw.ground_truth.items()
    }
    return Dataset(dets, gts, raw.num_classes)


def group_by_image(records: Iterable[Detection | GroundTruthBox]) -> dict[Hashable, list]:
    out: dict[Hashable, list] = {}
    for r in records:
        out.setdefault(r.image_id, []).append(r)
    return out


# Flat array views used by the numeric kernels.  Records of image k occupy
# rows offsets[k]:offsets[k + 1], in input order.


@dataclass(frozen=True)
class DetectionArrays:
    boxes: np.ndarray  # (n, 4) float64
    p1: np.ndarray
    p2: np.ndarray
    objectness: np.ndarray
    top_class: np.ndarray  # int64
    offsets: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.p1)

    @property
    def score(self) -> np.ndarray:
        return self.p1 * self.objectness

    @classmethod
    def from_detections(cls, dets: Sequence[Detection]) -> DetectionArrays:
        return cls.from_groups([dets])

    @classmethod
    def from_groups(cls, groups: Iterable[Sequence[Detection]]) -> DetectionArrays:
        boxes, p1, p2, obj, top, offsets = [], [], [], [], [], [0]
        for dets in groups:
            for d in dets:
                s = d.stats
                boxes.append(d.bbox)
                p1.append(s.p1)
                p2.append(s.p2)
                obj.append(d.objectness)
                top.append(s.top_class)
            offsets.append(len(p1))
        return cls(
            np.asarray(boxes, dtype=np.float64).reshape(-1, 4),
            np.asarray(p1, dtype=np.float64),
            np.asarray(p2, dtype=np.float64),
            np.asarray(obj, dtype=np.float64),
            np.asarray(top, dtype=np.int64),
            np.asarray(offsets, dtype=np.int64),
        )


@dataclass(frozen=True)
class GroundTruthArrays:
    boxes: np.ndarray
    class_index: np.ndarray
    offsets: np.ndarray

    def __len__(self) -> int:
        return len(self.class_index)

    @classmethod
    def from_groups(cls, groups: Iterable[Sequence[GroundTruthBox]]) -> GroundTruthArrays:
        boxes, classes, offsets = [], [], [0]
        for gts in groups:
            for g in gts:
                boxes.append(g.bbox)
                classes.append(g.class_index)
            offsets.append(len(classes))
        return cls(
            np.asarray(boxes, dtype=np.float64).reshape(-1, 4),
            np.asarray(classes, dtype=np.int64),
            np.asarray(offsets, dtype=np.int64),
        )


def pack_dataset(
    detections: Mapping[Hashable, Sequence[Detection]],
    ground_truth: Mapping[Hashable, Sequence[GroundTruthBox]],
) -> tuple[tuple[Hashable, ...], DetectionArrays, GroundTruthArrays]:
    """Pack per-image maps into aligned flat arrays over the union of images."""
    ids = list(ground_truth)
    seen = set(ids)
    ids.extend(k for k in detections if k not in seen)
    det_arr = DetectionArrays.from_groups(detections.get(k, ()) for k in ids)
    gt_arr = GroundTruthArrays.from_groups(ground_truth.get(k, ()) for k in ids)
    return tuple(ids), det_arr, gt_arr
