"""Score-threshold filter and the dual likelihood-ratio filter.

A detection survives the ratio filter iff

    p1 / p2        >= gamma1   (top class clearly beats the runner-up)
    objectness / p1 >= gamma2  (box confidence keeps pace with class confidence)

where p1, p2 are the two largest class probabilities.  Because p2 bounds
every non-top class probability from above and p1 bounds every class
probability, passing either test against p2 (resp. p1) implies passing it
against every other class.  Thresholds are applied to the raw ratios;
thresholding log-ratios is the same rule with ``gamma -> exp(gamma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from rmopp.errors import ConfigError, ValidationError
from rmopp.model import Detection, DetectionArrays


@dataclass(frozen=True)
class FilterThresholds:
    gamma1: float
    gamma2: float

    def __post_init__(self):
        for name in ("gamma1", "gamma2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ConfigError(f"{name} must be finite and non-negative, got {v!r}")


@dataclass(frozen=True)
class LegacyThreshold:
    gamma: float

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigError(f"legacy threshold must lie in [0, 1], got {self.gamma!r}")


def legacy_score(d: Detection) -> float:
    """Top-class probability times objectness."""
    return d.p1 * d.objectness


def legacy_filter(dets: Sequence[Detection], t: LegacyThreshold) -> list[Detection]:
    """Keep detections whose legacy score is strictly above ``t.gamma``."""
    return [d for d in dets if legacy_score(d) > t.gamma]


def llr_class_ratio(d: Detection) -> float:
    """``p1 / p2``; infinite for one-hot vectors."""
    p1, p2 = d.p1, d.p2
    if p2 == 0.0:
        return math.inf
    return p1 / p2


def llr_det_ratio(d: Detection) -> float:
    """``objectness / p1``."""
    p1 = d.p1
    if p1 <= 0.0:
        raise ValidationError("top class probability is zero; detection ratio undefined", d.image_id)
    return d.objectness / p1


def passes(d: Detection, t: FilterThresholds) -> bool:
    return llr_class_ratio(d) >= t.gamma1 and llr_det_ratio(d) >= t.gamma2


def rmopp_filter(dets: Sequence[Detection], t: FilterThresholds) -> list[Detection]:
    """Keep detections satisfying both ratio tests (non-strict), in input order."""
    return [d for d in dets if passes(d, t)]


def class_ratios(arr: DetectionArrays) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        r = arr.p1 / arr.p2
    r[arr.p2 == 0.0] = np.inf
    return r


def det_ratios(arr: DetectionArrays) -> np.ndarray:
    return arr.objectness / arr.p1


def rmopp_mask(class_ratio: np.ndarray, det_ratio: np.ndarray, t: FilterThresholds) -> np.ndarray:
    """Vectorised form of :func:`passes` over precomputed ratio arrays."""
    return (class_ratio >= t.gamma1) & (det_ratio >= t.gamma2)
