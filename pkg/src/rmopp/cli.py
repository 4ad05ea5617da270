"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 no grid cell satisfies the F1 constraint.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from rmopp.errors import ConfigError, InfeasibleSelectionError, RmoppError
from rmopp.filtering import FilterThresholds
from rmopp.formats import (
    cell_to_dict,
    load_dataset,
    load_detections,
    read_sweep_csv,
    write_detections,
    write_frontier_json,
    write_ground_truth,
    write_sweep_csv,
)
from rmopp.geometry import NmsConfig
from rmopp.metrics import coco_ap
from rmopp.model import Dataset
from rmopp.sweep import SelectionObjective, SweepConfig, default_workers, evaluate_point, pareto_frontier, postprocess, run_sweep, select_best
from rmopp.synth import SynthConfig, generate_synthetic

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3

log = logging.getLogger("rmopp")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _range(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected lo:hi:step, got {text!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric range {text!r}") from None
    return lo, hi, step


def _add_data_args(p: argparse.ArgumentParser, with_gt: bool = True) -> None:
    p.add_argument("--dets", required=True, help="detections JSONL")
    if with_gt:
        p.add_argument("--gt", required=True, help="ground truth file")
        p.add_argument("--gt-format", choices=("coco", "native"), default="native")
    p.add_argument("--renormalize", action="store_true", help="divide each class vector by its sum")


def _add_nms_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nms-iou", type=float, default=0.5, help="NMS IoU threshold (default 0.5)")
    p.add_argument("--class-agnostic", action="store_true", help="suppress across classes")
    p.add_argument("--rank-by", choices=("score", "objectness"), default="score")


def _nms(args) -> NmsConfig:
    return NmsConfig(args.nms_iou, not args.class_agnostic, args.rank_by)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rmopp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("filter", help="ratio filter + NMS at fixed thresholds")
    _add_data_args(p, with_gt=False)
    p.add_argument("--g1", type=float, required=True)
    p.add_argument("--g2", type=float, required=True)
    _add_nms_args(p)
    p.add_argument("--out", required=True, help="output detections JSONL")

    p = sub.add_parser("eval", help="P/R/F1 and AP at fixed thresholds")
    _add_data_args(p)
    p.add_argument("--g1", type=float, required=True)
    p.add_argument("--g2", type=float, required=True)
    _add_nms_args(p)
    p.add_argument("--match-iou", type=float, default=0.5)
    p.add_argument("--interpolation", choices=("coco101", "exact"), default="coco101")
    p.add_argument("--out", help="write the JSON report here instead of stdout")

    p = sub.add_parser("sweep", help="grid sweep over (gamma1, gamma2)")
    _add_data_args(p)
    p.add_argument("--g1", type=_range, default=(1.0, 10.0, 0.5), metavar="LO:HI:STEP")
    p.add_argument("--g2", type=_range, default=(0.1, 1.0, 0.05), metavar="LO:HI:STEP")
    _add_nms_args(p)
    p.add_argument("--match-iou", type=float, default=0.5)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default $RMOPP_WORKERS or 1)")
    p.add_argument("--out", required=True, help="output CSV")

    p = sub.add_parser("frontier", help="Pareto frontier and best cells from a sweep CSV")
    p.add_argument("results", help="CSV written by 'sweep'")
    p.add_argument("--objective", choices=("precision", "recall", "f1", "all"), default="all")
    p.add_argument("--min-f1", type=float, default=0.5)
    p.add_argument("--out", help="frontier JSON path")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--num-images", type=int, default=200)
    p.add_argument("--objects-per-image", type=int, default=5)
    p.add_argument("--num-classes", type=int, default=20)
    p.add_argument("--loc-noise", type=float, default=4.0)
    p.add_argument("--confusion", type=float, default=0.2)
    p.add_argument("--spurious", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dets", required=True)
    p.add_argument("--out-gt", required=True)
    return parser


def _cmd_filter(args) -> int:
    dets = load_detections(args.dets, renormalize=args.renormalize)
    num_classes = len(next(iter(dets.values()))[0].class_probs) if dets else 2
    data = Dataset(dets, {}, num_classes)
    out = postprocess(data, FilterThresholds(args.g1, args.g2), _nms(args))
    write_detections(args.out, out)
    total = sum(len(v) for v in dets.values())
    kept = sum(len(v) for v in out.values())
    print(f"kept {kept} of {total} detections")
    return EXIT_OK


def _load(args) -> Dataset:
    return load_dataset(args.dets, args.gt, args.gt_format, args.renormalize)


def _cmd_eval(args) -> int:
    data = _load(args)
    t = FilterThresholds(args.g1, args.g2)
    nms = _nms(args)
    cell = evaluate_point(data, t, nms, args.match_iou)
    kept = postprocess(data, t, nms)
    report = cell_to_dict(cell)
    report["ap"] = coco_ap(kept, data.ground_truth, args.interpolation).to_dict()
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    (g1lo, g1hi, d1), (g2lo, g2hi, d2) = args.g1, args.g2
    cfg = SweepConfig(g1lo, g1hi, d1, g2lo, g2hi, d2, _nms(args), args.match_iou)
    workers = default_workers() if args.workers is None else args.workers
    if workers < 1:
        raise ConfigError("--workers must be >= 1")
    data = _load(args)
    cells = run_sweep(data, cfg, workers)
    write_sweep_csv(cells, args.out)
    print(f"wrote {len(cells)} cells to {args.out}")
    return EXIT_OK


def _cmd_frontier(args) -> int:
    if not (0.0 <= args.min_f1 <= 1.0):
        raise ConfigError("--min-f1 must lie in [0, 1]")
    cells = read_sweep_csv(args.results)
    front = pareto_frontier(cells)
    if args.out:
        write_frontier_json(front, args.out)
    print(f"{len(front)} Pareto-optimal cells out of {sum(c.evaluated for c in cells)} evaluated")
    targets = ("precision", "recall", "f1") if args.objective == "all" else (args.objective,)
    print(f"{'Maximizing':<10} {'F1':>6} {'Recall':>7} {'Precision':>9} {'gamma1':>7} {'gamma2':>7}")
    status = EXIT_OK
    for target in targets:
        try:
            best = select_best(cells, SelectionObjective(target, args.min_f1))
        except InfeasibleSelectionError as exc:
            print(f"{target:<10} infeasible: {exc}")
            status = EXIT_INFEASIBLE
            continue
        print(f"{target:<10} {best.f1:>6.2f} {best.recall:>7.2f} {best.precision:>9.2f} {best.gamma1:>7g} {best.gamma2:>7g}")
    return status


def _cmd_synth(args) -> int:
    cfg = SynthConfig(
        args.num_images, args.objects_per_image, args.num_classes,
        args.loc_noise, args.confusion, args.spurious, args.seed,
    )
    data = generate_synthetic(cfg)
    write_detections(args.out_dets, data.detections)
    write_ground_truth(args.out_gt, data.ground_truth)
    print(f"{data.num_detections} detections, {data.num_ground_truth} annotations over {cfg.num_images} images")
    return EXIT_OK


COMMANDS = {
    "filter": _cmd_filter,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "frontier": _cmd_frontier,
    "synth": _cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"rmopp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"rmopp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RmoppError, OSError) as exc:
        print(f"rmopp: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
