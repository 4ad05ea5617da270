"""Grid sweep over (gamma1, gamma2), Pareto frontier and objective selection.

The sweep evaluates filter -> per-image NMS -> matching at every grid point
and reports precision/recall/F1 per point.  Grid points are independent, so
they may be spread over worker processes; results are always assembled in
the (gamma2, gamma1) loop order and do not depend on the worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Literal, Sequence

import numpy as np

from rmopp.errors import ConfigError, InfeasibleSelectionError
from rmopp.filtering import FilterThresholds, class_ratios, det_ratios, rmopp_mask
from rmopp.geometry import NmsConfig, nms_keep, rank_values, ranked_order
from rmopp.metrics import MatchCounts, PrfScores, match_arrays, prf
from rmopp.model import Dataset, Detection, pack_dataset

WORKERS_ENV = "RMOPP_WORKERS"


def grid_axis(lo: float, hi: float, step: float) -> tuple[float, ...]:
    """Inclusive grid ``lo + k * step`` for ``k = 0 .. floor((hi - lo) / step)``.

    Values are rounded to 10 decimals so that e.g. 0.1 + 5 * 0.05 is 0.35
    rather than 0.35000000000000003.
    """
    if not (step > 0 and math.isfinite(step)):
        raise ConfigError(f"grid step must be positive, got {step!r}")
    if lo > hi:
        raise ConfigError(f"empty grid: lower bound {lo} exceeds upper bound {hi}")
    count = math.floor((hi - lo) / step + 1e-9) + 1
    return tuple(round(lo + k * step, 10) for k in range(count))


@dataclass(frozen=True)
class SweepConfig:
    gamma1_lo: float = 1.0
    gamma1_hi: float = 10.0
    delta1: float = 0.5
    gamma2_lo: float = 0.1
    gamma2_hi: float = 1.0
    delta2: float = 0.05
    nms: NmsConfig = field(default_factory=NmsConfig)
    match_iou: float = 0.5

    def __post_init__(self):
        # raises on an empty or malformed axis
        self.gamma1_values()
        self.gamma2_values()
        if self.gamma1_lo < 0 or self.gamma2_lo < 0:
            raise ConfigError("gamma lower bounds must be non-negative")
        if not (0.0 < self.match_iou < 1.0):
            raise ConfigError(f"match IoU must lie in (0, 1), got {self.match_iou!r}")

    def gamma1_values(self) -> tuple[float, ...]:
        return grid_axis(self.gamma1_lo, self.gamma1_hi, self.delta1)

    def gamma2_values(self) -> tuple[float, ...]:
        return grid_axis(self.gamma2_lo, self.gamma2_hi, self.delta2)

    def grid(self) -> list[tuple[float, float]]:
        """(gamma1, gamma2) pairs, gamma2 in the outer loop."""
        g1s = self.gamma1_values()
        return [(g1, g2) for g2 in self.gamma2_values() for g1 in g1s]


@dataclass(frozen=True)
class GammaCell:
    """Outcome at one grid point.

    ``passed`` counts detections surviving the ratio filter, ``kept`` those
    also surviving NMS.  When nothing survives the cell is not evaluated and
    ``scores`` is None.
    """

    gamma1: float
    gamma2: float
    counts: MatchCounts
    scores: PrfScores | None
    kept: int
    passed: int = 0

    @property
    def evaluated(self) -> bool:
        return self.kept > 0

    @property
    def precision(self) -> float:
        return self.scores.precision

    @property
    def recall(self) -> float:
        return self.scores.recall

    @property
    def f1(self) -> float:
        return self.scores.f1

    @classmethod
    def from_counts(cls, gamma1: float, gamma2: float, counts: MatchCounts, kept: int, passed: int = 0) -> GammaCell:
        return cls(gamma1, gamma2, counts, prf(counts) if kept > 0 else None, kept, passed)


class _Prepared:
    """Packed arrays and filter ratios computed once per dataset."""

    def __init__(self, data: Dataset, nms: NmsConfig, match_iou: float):
        self.image_ids, self.det, self.gt = pack_dataset(data.detections, data.ground_truth)
        self.class_ratio = class_ratios(self.det)
        self.det_ratio = det_ratios(self.det)
        self.rank = rank_values(self.det, nms)
        self.nms = nms
        self.match_iou = match_iou
        self.num_gt = len(self.gt)

    def keep_mask(self, t: FilterThresholds) -> tuple[np.ndarray, int]:
        active = rmopp_mask(self.class_ratio, self.det_ratio, t)
        passed = int(np.count_nonzero(active))
        if passed == 0:
            return active, 0
        return nms_keep(self.det, active, self.nms, self.rank), passed

    def cell(self, gamma1: float, gamma2: float) -> GammaCell:
        keep, passed = self.keep_mask(FilterThresholds(gamma1, gamma2))
        kept = int(np.count_nonzero(keep))
        if kept == 0:
            return GammaCell.from_counts(gamma1, gamma2, MatchCounts(0, 0, self.num_gt), 0, passed)
        matched = match_arrays(self.det, self.gt, self.match_iou, keep)
        tp = int(np.count_nonzero(matched >= 0))
        return GammaCell.from_counts(gamma1, gamma2, MatchCounts(tp, kept - tp, self.num_gt - tp), kept, passed)


_WORKER_STATE: _Prepared | None = None


def _init_worker(prepared: _Prepared) -> None:
    global _WORKER_STATE
    _WORKER_STATE = prepared


def _eval_chunk(points: Sequence[tuple[float, float]]) -> list[GammaCell]:
    return [_WORKER_STATE.cell(g1, g2) for g1, g2 in points]


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1, got {n}")
    return n


def run_sweep(data: Dataset, cfg: SweepConfig = SweepConfig(), workers: int | None = None) -> list[GammaCell]:
    """Evaluate every grid point; output ordered by (gamma2, gamma1)."""
    points = cfg.grid()
    if workers is None:
        workers = default_workers()
    prepared = _Prepared(data, cfg.nms, cfg.match_iou)
    if workers <= 1 or len(points) < 2:
        return [prepared.cell(g1, g2) for g1, g2 in points]
    # warm the compiled kernels before forking so children inherit them
    prepared.cell(*points[0])
    chunk = max(1, math.ceil(len(points) / (workers * 4)))
    chunks = [points[i:i + chunk] for i in range(0, len(points), chunk)]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(prepared,)) as pool:
        results = list(pool.map(_eval_chunk, chunks))
    return [c for part in results for c in part]


def postprocess(
    data: Dataset, t: FilterThresholds, nms: NmsConfig = NmsConfig()
) -> dict[Hashable, list[Detection]]:
    """Ratio filter then NMS per image; each image's survivors by descending rank."""
    prepared = _Prepared(data, nms, 0.5)
    keep, _ = prepared.keep_mask(t)
    flat = [d for img in prepared.image_ids for d in data.detections.get(img, ())]
    offsets = prepared.det.offsets
    out: dict[Hashable, list[Detection]] = {}
    for k, img in enumerate(prepared.image_ids):
        rows = np.flatnonzero(keep[offsets[k]:offsets[k + 1]]) + offsets[k]
        out[img] = [flat[i] for i in ranked_order(prepared.rank, rows)]
    return out


def evaluate_point(data: Dataset, t: FilterThresholds, nms: NmsConfig = NmsConfig(), match_iou: float = 0.5) -> GammaCell:
    return _Prepared(data, nms, match_iou).cell(t.gamma1, t.gamma2)


def dominates(a: GammaCell, b: GammaCell) -> bool:
    return (
        a.precision >= b.precision
        and a.recall >= b.recall
        and (a.precision > b.precision or a.recall > b.recall)
    )


def pareto_frontier(cells: Iterable[GammaCell]) -> list[GammaCell]:
    """Cells not dominated in (precision, recall), sorted by recall ascending.

    Unevaluated cells are ignored.  Cells sharing an identical
    (precision, recall) pair are all kept.
    """
    pool = [c for c in cells if c.evaluated]
    # Scan by precision descending; a cell survives iff its recall beats every
    # recall seen at strictly higher precision or at equal precision and higher recall.
    pool.sort(key=lambda c: (-c.precision, -c.recall))
    front: list[GammaCell] = []
    best_recall = -math.inf
    i = 0
    while i < len(pool):
        j = i
        key = (pool[i].precision, pool[i].recall)
        while j < len(pool) and (pool[j].precision, pool[j].recall) == key:
            j += 1
        if key[1] > best_recall:
            front.extend(pool[i:j])
            best_recall = key[1]
        i = j
    front.sort(key=lambda c: (c.recall, -c.precision, c.gamma2, c.gamma1))
    return front


Objective = Literal["precision", "recall", "f1"]

_TIEBREAK = {"precision": "recall", "recall": "precision", "f1": "precision"}


@dataclass(frozen=True)
class SelectionObjective:
    """What to maximise, subject to ``f1 >= min_f1``.

    When ``min_f1`` is left as None the constraint defaults to 0.5 for
    precision/recall targets and is off for the F1 target.
    """

    target: Objective = "f1"
    min_f1: float | None = None

    def __post_init__(self):
        if self.target not in _TIEBREAK:
            raise ConfigError(f"unknown objective {self.target!r}")
        if self.min_f1 is not None and not (0.0 <= self.min_f1 <= 1.0):
            raise ConfigError(f"min_f1 must lie in [0, 1], got {self.min_f1!r}")

    @property
    def effective_min_f1(self) -> float:
        if self.min_f1 is not None:
            return self.min_f1
        return 0.0 if self.target == "f1" else 0.5


def select_best(cells: Iterable[GammaCell], obj: SelectionObjective) -> GammaCell:
    """Best feasible cell for the objective.

    Ties: the complementary metric (recall for precision, precision for
    recall and F1), then the smaller (gamma1, gamma2).
    """
    evaluated = [c for c in cells if c.evaluated]
    floor = obj.effective_min_f1
    feasible = [c for c in evaluated if c.f1 >= floor]
    if not feasible:
        best = max((c.f1 for c in evaluated), default=None)
        raise InfeasibleSelectionError(floor, best)
    primary, secondary = obj.target, _TIEBREAK[obj.target]
    return min(
        feasible,
        key=lambda c: (-getattr(c, primary), -getattr(c, secondary), c.gamma1, c.gamma2),
    )
