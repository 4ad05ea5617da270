"""Generate a synthetic dataset, sweep the default grid and report best cells.

Usage::

    python3 scripts/run_synthetic_sweep.py --out-dir runs/synth --workers 4

Writes ``sweep.csv`` and ``frontier.json`` to the output directory and prints
the selected operating point for each objective plus the grid corners.
"""

from __future__ import annotations

import argparse
import os
import time

from rmopp.errors import InfeasibleSelectionError
from rmopp.formats import write_frontier_json, write_sweep_csv
from rmopp.sweep import SelectionObjective, SweepConfig, pareto_frontier, run_sweep, select_best
from rmopp.synth import SynthConfig, generate_synthetic


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/synth")
    ap.add_argument("--num-images", type=int, default=200)
    ap.add_argument("--confusion", type=float, default=0.2)
    ap.add_argument("--spurious", type=float, default=3.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--min-f1", type=float, default=0.5)
    args = ap.parse_args()

    data = generate_synthetic(
        SynthConfig(num_images=args.num_images, confusion_rate=args.confusion, spurious_rate=args.spurious, seed=args.seed)
    )
    print(f"{data.num_detections} detections, {data.num_ground_truth} annotations")

    start = time.perf_counter()
    cells = run_sweep(data, SweepConfig(), args.workers)
    print(f"swept {len(cells)} cells in {time.perf_counter() - start:.2f} s")

    os.makedirs(args.out_dir, exist_ok=True)
    write_sweep_csv(cells, os.path.join(args.out_dir, "sweep.csv"))
    front = pareto_frontier(cells)
    write_frontier_json(front, os.path.join(args.out_dir, "frontier.json"))
    print(f"{len(front)} frontier cells")

    for name, c in (("low corner", cells[0]), ("high corner", cells[-1])):
        print(f"{name:<12} g1={c.gamma1:g} g2={c.gamma2:g} kept={c.kept} P={c.precision:.3f} R={c.recall:.3f}")
    for target in ("precision", "recall", "f1"):
        try:
            best = select_best(cells, SelectionObjective(target, args.min_f1))
        except InfeasibleSelectionError as exc:
            print(f"{target:<12} {exc}")
            continue
        print(f"{target:<12} g1={best.gamma1:g} g2={best.gamma2:g} P={best.precision:.3f} R={best.recall:.3f} F1={best.f1:.3f}")


if __name__ == "__main__":
    main()
