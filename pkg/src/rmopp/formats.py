"""Readers and writers for detections, annotations and sweep results.

Detections (JSONL, one object per line)::

    {"image_id": "17", "bbox": [x1, y1, x2, y2], "bbox_format": "xyxy",
     "class_probs": [...], "objectness": 0.8}

``bbox_format`` may be ``"xywh"``; a missing ``objectness`` means 1.0.

Native ground truth (JSONL)::

    {"image_id": "17", "class_index": 3, "bbox": [...], "bbox_format": "xyxy"}

COCO ground truth uses the ``images``/``annotations``/``categories`` subset
of the COCO annotation schema.  Category ids are remapped to contiguous
class indices in the order of the ``categories`` array.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Iterator, Literal, Mapping, Sequence

from rmopp.errors import DataFormatError, ValidationError
from rmopp.metrics import MatchCounts
from rmopp.model import Dataset, Detection, GroundTruthBox, validate_dataset
from rmopp.sweep import GammaCell

log = logging.getLogger(__name__)

CSV_COLUMNS = ("gamma1", "gamma2", "precision", "recall", "f1", "tp", "fp", "fn", "kept", "evaluated")


def xywh_to_xyxy(b: Sequence[float]) -> tuple[float, float, float, float]:
    x, y, w, h = (float(v) for v in b)
    return (x, y, x + w, y + h)


def xyxy_to_xywh(b: Sequence[float]) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = (float(v) for v in b)
    return (x1, y1, x2 - x1, y2 - y1)


def _bbox_from_record(rec: Mapping[str, Any]) -> tuple[float, ...]:
    bbox = rec["bbox"]
    if not isinstance(bbox, list) or len(bbox) != 4:
        raise ValueError(f"bbox must be a list of 4 numbers, got {bbox!r}")
    fmt = rec.get("bbox_format", "xyxy")
    if fmt == "xyxy":
        return tuple(float(v) for v in bbox)
    if fmt == "xywh":
        return xywh_to_xyxy(bbox)
    raise ValueError(f"unknown bbox_format {fmt!r}")


def _read_jsonl(path: str | os.PathLike) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"malformed JSON ({exc.msg})", str(path), line_no) from None
            if not isinstance(rec, dict):
                raise DataFormatError("expected a JSON object", str(path), line_no)
            yield line_no, rec


def detection_from_record(rec: Mapping[str, Any]) -> Detection:
    obj = rec.get("objectness")
    return Detection(
        image_id=str(rec["image_id"]),
        bbox=_bbox_from_record(rec),
        class_probs=tuple(float(p) for p in rec["class_probs"]),
        objectness=1.0 if obj is None else float(obj),
    )


def detection_to_record(d: Detection) -> dict:
    return {
        "image_id": d.image_id,
        "bbox": list(d.bbox),
        "bbox_format": "xyxy",
        "class_probs": list(d.class_probs),
        "objectness": d.objectness,
    }


def _parse_detections(path) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    for line_no, rec in _read_jsonl(path):
        try:
            d = detection_from_record(rec)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad detection record: {exc!r}", str(path), line_no) from None
        out.setdefault(d.image_id, []).append(d)
    return out


def load_detections(
    path: str | os.PathLike, num_classes: int | None = None, renormalize: bool = False
) -> dict[str, tuple[Detection, ...]]:
    """Read and validate a detections JSONL file.

    ``num_classes`` defaults to the length of the first probability vector.
    """
    raw = _parse_detections(path)
    if num_classes is None:
        first = next((ds[0] for ds in raw.values() if ds), None)
        if first is None:
            return {}
        num_classes = len(first.class_probs)
    return dict(validate_dataset(Dataset(raw, {}, num_classes), renormalize).detections)


def write_detections(path: str | os.PathLike, dets: Mapping[Hashable, Iterable[Detection]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for records in dets.values():
            for d in records:
                fh.write(json.dumps(detection_to_record(d)) + "\n")


@dataclass(frozen=True)
class GroundTruthFile:
    """Parsed annotations.

    ``category_map`` maps COCO category id to class index (None for the
    native format).  ``boxes`` has an entry for every listed image, empty
    when the image has no annotations.
    """

    boxes: dict[str, tuple[GroundTruthBox, ...]]
    num_classes: int | None = None
    category_map: dict[int, int] | None = None
    category_names: dict[int, str] = field(default_factory=dict)
    crowd_skipped: int = 0


def _load_coco(path) -> GroundTruthFile:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"malformed JSON ({exc.msg})", str(path), exc.lineno) from None
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise DataFormatError(f"missing {key!r} array", str(path))
    cat_map: dict[int, int] = {}
    names: dict[int, str] = {}
    for cat in doc["categories"]:
        cid = int(cat["id"])
        if cid in cat_map:
            raise DataFormatError(f"duplicate category id {cid}", str(path))
        cat_map[cid] = len(cat_map)
        names[cat_map[cid]] = str(cat.get("name", cid))
    boxes: dict[str, list[GroundTruthBox]] = {str(img["id"]): [] for img in doc["images"]}
    crowd = 0
    for k, ann in enumerate(doc["annotations"]):
        img = str(ann["image_id"])
        if img not in boxes:
            raise ValidationError(f"annotation references unknown image id {ann['image_id']!r}", img, k)
        cid = int(ann["category_id"])
        if cid not in cat_map:
            raise ValidationError(f"annotation references unknown category id {cid}", img, k)
        if ann.get("iscrowd", 0):
            crowd += 1
            continue
        boxes[img].append(GroundTruthBox(img, cat_map[cid], xywh_to_xyxy(ann["bbox"])))
    if crowd:
        log.warning("skipped %d crowd annotations in %s", crowd, path)
    return GroundTruthFile({k: tuple(v) for k, v in boxes.items()}, len(cat_map), cat_map, names, crowd)


def _load_native(path) -> GroundTruthFile:
    boxes: dict[str, list[GroundTruthBox]] = {}
    for line_no, rec in _read_jsonl(path):
        try:
            g = GroundTruthBox(str(rec["image_id"]), int(rec["class_index"]), _bbox_from_record(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad annotation record: {exc!r}", str(path), line_no) from None
        boxes.setdefault(g.image_id, []).append(g)
    return GroundTruthFile({k: tuple(v) for k, v in boxes.items()})


def load_ground_truth(path: str | os.PathLike, format: Literal["coco", "native"] = "coco") -> GroundTruthFile:
    if format == "coco":
        return _load_coco(path)
    if format == "native":
        return _load_native(path)
    raise ValueError(f"unknown ground-truth format {format!r}")


def write_ground_truth(path: str | os.PathLike, gts: Mapping[Hashable, Iterable[GroundTruthBox]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for records in gts.values():
            for g in records:
                rec = {"image_id": g.image_id, "class_index": g.class_index, "bbox": list(g.bbox), "bbox_format": "xyxy"}
                fh.write(json.dumps(rec) + "\n")


def load_dataset(
    dets_path: str | os.PathLike,
    gt_path: str | os.PathLike,
    gt_format: Literal["coco", "native"] = "native",
    renormalize: bool = False,
    num_classes: int | None = None,
) -> Dataset:
    """Read detections and annotations into one validated dataset.

    The class count comes from, in order: the argument, the COCO category
    list, the first detection's probability vector.
    """
    gt = load_ground_truth(gt_path, gt_format)
    raw = _parse_detections(dets_path)
    if num_classes is None:
        num_classes = gt.num_classes
    if num_classes is None:
        first = next((ds[0] for ds in raw.values() if ds), None)
        if first is None:
            seen = [g.class_index for gs in gt.boxes.values() for g in gs]
            num_classes = max(max(seen, default=0) + 1, 2)
        else:
            num_classes = len(first.class_probs)
    return validate_dataset(Dataset(raw, gt.boxes, num_classes), renormalize)


def dataset_bytes(data: Dataset) -> bytes:
    """Canonical serialisation (detections JSONL + annotations JSONL)."""
    lines = [json.dumps({"num_classes": data.num_classes})]
    for recs in data.detections.values():
        lines.extend(json.dumps(detection_to_record(d)) for d in recs)
    for recs in data.ground_truth.values():
        lines.extend(
            json.dumps({"image_id": g.image_id, "class_index": g.class_index, "bbox": list(g.bbox)}) for g in recs
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def sweep_rows(cells: Iterable[GammaCell]) -> Iterator[list[str]]:
    for c in cells:
        if c.evaluated:
            metrics = [_fmt(c.precision), _fmt(c.recall), _fmt(c.f1)]
        else:
            metrics = ["", "", ""]
        yield [
            _fmt(c.gamma1), _fmt(c.gamma2), *metrics,
            str(c.counts.tp), str(c.counts.fp), str(c.counts.fn), str(c.kept),
            "true" if c.evaluated else "false",
        ]


def write_sweep_csv(cells: Iterable[GammaCell], path: str | os.PathLike) -> None:
    """One header line plus one row per cell, in the order given."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(sweep_rows(cells))


def read_sweep_csv(path: str | os.PathLike) -> list[GammaCell]:
    """Inverse of :func:`write_sweep_csv`.

    Scores are recomputed from the integer counts, so they are exact rather
    than the 6-decimal rendering.
    """
    cells = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise DataFormatError(f"unexpected CSV header {reader.fieldnames!r}", str(path), 1)
        for line_no, row in enumerate(reader, start=2):
            try:
                counts = MatchCounts(int(row["tp"]), int(row["fp"]), int(row["fn"]))
                kept = int(row["kept"])
                cell = GammaCell.from_counts(float(row["gamma1"]), float(row["gamma2"]), counts, kept)
            except (TypeError, ValueError) as exc:
                raise DataFormatError(f"bad sweep row: {exc}", str(path), line_no) from None
            if cell.evaluated != (row["evaluated"] == "true"):
                raise DataFormatError("evaluated flag disagrees with kept count", str(path), line_no)
            cells.append(cell)
    return cells


def cell_to_dict(c: GammaCell) -> dict:
    return {
        "gamma1": c.gamma1,
        "gamma2": c.gamma2,
        "precision": c.precision if c.evaluated else None,
        "recall": c.recall if c.evaluated else None,
        "f1": c.f1 if c.evaluated else None,
        "tp": c.counts.tp,
        "fp": c.counts.fp,
        "fn": c.counts.fn,
        "kept": c.kept,
        "evaluated": c.evaluated,
    }


def write_frontier_json(cells: Iterable[GammaCell], path: str | os.PathLike) -> None:
    """Frontier cells as a JSON array, sorted by recall ascending."""
    cells = sorted(cells, key=lambda c: (c.recall, -c.precision, c.gamma2, c.gamma1))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([cell_to_dict(c) for c in cells], fh, indent=2 if cells else None)
        fh.write("\n")
