"""Dual likelihood-ratio post-processing for object detectors.

Filter raw detections by the top-1/top-2 class ratio and the
objectness/top-1 ratio, sweep both thresholds over a grid, and pick
Pareto-optimal (precision, recall) operating points.
"""

from rmopp.errors import ConfigError, DataFormatError, InfeasibleSelectionError, RmoppError, ValidationError
from rmopp.filtering import (
    FilterThresholds,
    LegacyThreshold,
    legacy_filter,
    legacy_score,
    llr_class_ratio,
    llr_det_ratio,
    rmopp_filter,
)
from rmopp.geometry import NmsConfig, greedy_nms, iou
from rmopp.metrics import ApReport, MatchCounts, PrfScores, ap_per_class, coco_ap, match_detections, prf
from rmopp.model import Dataset, Detection, GroundTruthBox, OrderedClassStats, ordered_stats, validate_dataset
from rmopp.sweep import (
    GammaCell,
    SelectionObjective,
    SweepConfig,
    pareto_frontier,
    postprocess,
    run_sweep,
    select_best,
)
from rmopp.synth import SynthConfig, generate_synthetic

__version__ = "0.1.0"
