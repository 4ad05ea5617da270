"""Time ratio filtering + NMS on one image of N detections.

Usage::

    python3 scripts/bench_latency.py --sizes 100 1000 5000 --repeats 300

Ordered class statistics are packed once; each timed step computes both
ratios, the threshold mask and the class-wise NMS keep mask.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rmopp.filtering import FilterThresholds, class_ratios, det_ratios, rmopp_mask
from rmopp.geometry import NmsConfig, nms_keep, rank_values
from rmopp.model import DetectionArrays
from rmopp.synth import SynthConfig, generate_synthetic


def image_arrays(n: int, num_classes: int, seed: int) -> DetectionArrays:
    # spurious-only synthetic image: random boxes over the full canvas
    cfg = SynthConfig(num_images=1, objects_per_image=0, num_classes=num_classes, spurious_rate=float(n), seed=seed)
    dets = next(iter(generate_synthetic(cfg).detections.values()))
    return DetectionArrays.from_detections(dets)


def bench(arr: DetectionArrays, t: FilterThresholds, cfg: NmsConfig, repeats: int) -> np.ndarray:
    rank = rank_values(arr, cfg)
    nms_keep(arr, np.ones(len(arr), dtype=bool), cfg, rank)  # compile
    out = np.empty(repeats)
    for k in range(repeats):
        start = time.perf_counter()
        nms_keep(arr, rmopp_mask(class_ratios(arr), det_ratios(arr), t), cfg, rank)
        out[k] = time.perf_counter() - start
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 1000, 5000])
    ap.add_argument("--classes", type=int, default=80)
    ap.add_argument("--repeats", type=int, default=300)
    ap.add_argument("--g1", type=float, default=1.0)
    ap.add_argument("--g2", type=float, default=0.0)
    ap.add_argument("--class-agnostic", action="store_true")
    args = ap.parse_args()

    t = FilterThresholds(args.g1, args.g2)
    cfg = NmsConfig(class_wise=not args.class_agnostic)
    print(f"{'N':>6} {'median ms':>10} {'p90 ms':>8}")
    for n in args.sizes:
        arr = image_arrays(n, args.classes, seed=n)
        times = bench(arr, t, cfg, args.repeats) * 1e3
        print(f"{len(arr):>6} {np.median(times):>10.3f} {np.percentile(times, 90):>8.3f}")


if __name__ == "__main__":
    main()
