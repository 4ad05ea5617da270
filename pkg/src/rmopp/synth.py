"""Seeded synthetic detector output for tests and experiments.

Each annotated object yields one detection whose corners are jittered by
Gaussian noise.  Its class vector puts a peak mass ``m = 0.5 + 0.5 * B``
(``B ~ Beta(2, 1)``) on the intended class, hands a share ``U(0.5, 1)`` of
the remainder to one runner-up class and spreads the rest uniformly at
random over the other classes, so the intended class is always the argmax.
With probability ``confusion_rate`` the intended class is a random wrong
one.  Objectness is ``Beta(5, 2)``.

Spurious boxes (Poisson count per image) are placed at random with
near-uniform class vectors (``Dirichlet(20)``) and objectness ``Beta(2, 5)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rmopp.errors import ConfigError
from rmopp.geometry import iou
from rmopp.model import Dataset, Detection, GroundTruthBox

CANVAS = 1000.0
MIN_SIDE = 30.0
MAX_SIDE = 200.0
MAX_GT_OVERLAP = 0.3


@dataclass(frozen=True)
class SynthConfig:
    num_images: int = 200
    objects_per_image: int = 5
    num_classes: int = 20
    loc_noise_sigma: float = 4.0
    confusion_rate: float = 0.2
    spurious_rate: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.num_images < 0 or self.objects_per_image < 0:
            raise ConfigError("image and object counts must be non-negative")
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes")
        if self.loc_noise_sigma < 0:
            raise ConfigError("loc_noise_sigma must be non-negative")
        if not (0.0 <= self.confusion_rate <= 1.0):
            raise ConfigError("confusion_rate must lie in [0, 1]")
        if self.spurious_rate < 0:
            raise ConfigError("spurious_rate must be non-negative")


def _random_box(rng: np.random.Generator) -> tuple[float, float, float, float]:
    w, h = rng.uniform(MIN_SIDE, MAX_SIDE, size=2)
    x = rng.uniform(0.0, CANVAS - w)
    y = rng.uniform(0.0, CANVAS - h)
    return (float(x), float(y), float(x + w), float(y + h))


def _place_objects(rng: np.random.Generator, count: int) -> list[tuple[float, float, float, float]]:
    # Rejection keeps annotations from overlapping beyond MAX_GT_OVERLAP, so a
    # noiseless detector is never suppressed by NMS at the default threshold.
    boxes: list[tuple[float, float, float, float]] = []
    for _ in range(count):
        for _attempt in range(1000):
            b = _random_box(rng)
            if all(iou(b, o) <= MAX_GT_OVERLAP for o in boxes):
                break
        boxes.append(b)
    return boxes


def _peaked_probs(rng: np.random.Generator, n: int, cls: int) -> tuple[float, ...]:
    probs = np.zeros(n)
    peak = 0.5 + 0.5 * rng.beta(2.0, 1.0)
    rest = 1.0 - peak
    others = np.delete(np.arange(n), cls)
    runner = rng.choice(others)
    share = rng.uniform(0.5, 1.0)
    probs[cls] = peak
    if n == 2:
        probs[runner] = rest
    else:
        probs[runner] = rest * share
        tail = np.delete(others, np.flatnonzero(others == runner))
        probs[tail] = rest * (1.0 - share) * rng.dirichlet(np.ones(len(tail)))
    return tuple(float(p) for p in probs)


def _jitter(rng: np.random.Generator, box, sigma: float) -> tuple[float, float, float, float]:
    if sigma == 0:
        return box
    x1, y1, x2, y2 = np.asarray(box) + rng.normal(0.0, sigma, size=4)
    # keep a valid box under heavy noise
    if x2 - x1 < 1.0:
        x2 = x1 + 1.0
    if y2 - y1 < 1.0:
        y2 = y1 + 1.0
    return (float(x1), float(y1), float(x2), float(y2))


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Build a dataset fully determined by ``cfg`` (including its seed)."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.num_classes
    dets: dict[str, tuple[Detection, ...]] = {}
    gts: dict[str, tuple[GroundTruthBox, ...]] = {}
    for k in range(cfg.num_images):
        img = f"img{k:05d}"
        image_gts = []
        image_dets = []
        for box in _place_objects(rng, cfg.objects_per_image):
            cls = int(rng.integers(n))
            image_gts.append(GroundTruthBox(img, cls, box))
            target = cls
            if rng.random() < cfg.confusion_rate:
                target = int(rng.choice(np.delete(np.arange(n), cls)))
            image_dets.append(
                Detection(img, _jitter(rng, box, cfg.loc_noise_sigma), _peaked_probs(rng, n, target), float(rng.beta(5.0, 2.0)))
            )
        for _ in range(rng.poisson(cfg.spurious_rate)):
            probs = tuple(float(p) for p in rng.dirichlet(np.full(n, 20.0)))
            image_dets.append(Detection(img, _random_box(rng), probs, float(rng.beta(2.0, 5.0))))
        gts[img] = tuple(image_gts)
        dets[img] = tuple(image_dets)
    return Dataset(dets, gts, n)
