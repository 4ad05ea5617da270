import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import det, gt, random_box, random_dataset
from rmopp.filtering import legacy_score
from rmopp.geometry import iou
from rmopp.metrics import (
    COCO_IOU_THRESHOLDS,
    MatchCounts,
    ap_per_class,
    average_precision,
    coco_ap,
    f1_score,
    match_detections,
    prf,
)
from rmopp.model import Detection


def exhaustive_match(dets, gts, thresh):
    """Enumerate every injective partial assignment of detections to annotations.

    Among valid assignments (same class, IoU > thresh) pick the one whose
    per-detection outcomes, read in score order, are lexicographically best,
    where an outcome is (IoU of the match, -annotation index) or "unmatched".
    That is the assignment greedy score-ordered matching must produce.
    """
    order = sorted(range(len(dets)), key=lambda i: (-legacy_score(dets[i]), i))
    options = []
    for i in order:
        opts = [
            g for g in range(len(gts))
            if gts[g].class_index == dets[i].top_class and iou(dets[i].bbox, gts[g].bbox) > thresh
        ]
        options.append(opts)
    best = None

    def rec(k, used, outcome):
        nonlocal best
        if k == len(order):
            if best is None or tuple(outcome) > best[0]:
                best = (tuple(outcome), len(used))
            return
        i = order[k]
        for g in options[k]:
            if g not in used:
                rec(k + 1, used | {g}, outcome + [(iou(dets[i].bbox, gts[g].bbox), -g)])
        rec(k + 1, used, outcome + [(-1.0, 0)])

    rec(0, frozenset(), [])
    tp = best[1]
    return MatchCounts(tp, len(dets) - tp, len(gts) - tp)


def test_identity_match():
    assert match_detections({"a": [det([1, 0])]}, {"a": [gt(0)]}) == MatchCounts(1, 0, 0)


def test_wrong_class():
    assert match_detections({"a": [det([0, 1])]}, {"a": [gt(0)]}) == MatchCounts(0, 1, 1)


def test_duplicate_detection_is_false_positive():
    a = det([0.9, 0.1], bbox=(0, 0, 10, 10))
    b = det([0.8, 0.2], bbox=(0, 0, 10, 9))
    assert match_detections({"a": [b, a]}, {"a": [gt(0)]}) == MatchCounts(1, 1, 0)


def test_highest_scored_claims_best_overlap():
    # the top detection takes g1 (higher IoU) so the second one falls back to g0
    d_hi = det([0.9, 0.1], bbox=(0, 0, 10, 10))
    d_lo = det([0.8, 0.2], bbox=(0, 0, 10, 10))
    g0 = gt(0, (0, 0, 10, 8))
    g1 = gt(0, (0, 0, 10, 10))
    assert match_detections({"a": [d_lo, d_hi]}, {"a": [g0, g1]}) == MatchCounts(2, 0, 0)


def test_iou_threshold_is_strict():
    d = det([1, 0], bbox=(0, 0, 10, 5))
    assert match_detections({"a": [d]}, {"a": [gt(0)]}, 0.5) == MatchCounts(0, 1, 1)
    assert match_detections({"a": [d]}, {"a": [gt(0)]}, 0.49) == MatchCounts(1, 0, 0)


def test_images_do_not_mix():
    d = det([1, 0], image_id="x")
    assert match_detections({"x": [d]}, {"y": [gt(0, image_id="y")]}) == MatchCounts(0, 1, 1)


def test_no_detections():
    assert match_detections({}, {"a": [gt(0), gt(1)]}) == MatchCounts(0, 0, 2)


def _small_instance(rng):
    n_cls = int(rng.integers(1, 3)) + 1
    anchors = [random_box(rng, 30.0, 20.0) for _ in range(3)]

    def near():
        b = anchors[rng.integers(len(anchors))]
        return tuple(v + rng.normal(0, 2.0) for v in b) if rng.random() < 0.8 else random_box(rng, 30.0, 20.0)

    def fix(b):
        x1, y1, x2, y2 = b
        return (x1, y1, max(x2, x1 + 0.5), max(y2, y1 + 0.5))

    gts = [gt(int(rng.integers(n_cls)), fix(near())) for _ in range(rng.integers(0, 7))]
    dets = []
    for _ in range(rng.integers(0, 7)):
        p = np.zeros(n_cls)
        p[rng.integers(n_cls)] = rng.uniform(0.5, 1.0)
        p[p == 0] = (1 - p.sum()) / max(1, (p == 0).sum())
        dets.append(det(p, rng.choice([0.5, 1.0, rng.uniform()]), fix(near())))
    return dets, gts


def test_against_exhaustive_oracle(rng):
    for _ in range(300):
        dets, gts = _small_instance(rng)
        thresh = float(rng.choice([0.3, 0.5, 0.7]))
        assert match_detections({"a": dets}, {"a": gts}, thresh) == exhaustive_match(dets, gts, thresh)


def test_count_invariants(rng):
    for _ in range(30):
        ds = random_dataset(rng)
        c = match_detections(ds.detections, ds.ground_truth)
        assert c.tp + c.fn == ds.num_ground_truth
        assert c.tp + c.fp == ds.num_detections


@pytest.mark.parametrize(
    "precision, recall, f1",
    [(0.88, 0.35, 0.50), (0.43, 0.60, 0.50), (0.68, 0.49, 0.57)],
)
def test_f1_matches_reported_operating_points(precision, recall, f1):
    assert f1_score(precision, recall) == pytest.approx(f1, abs=0.005)


def test_prf_zero_denominators():
    s = prf(MatchCounts(0, 0, 5))
    assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)
    s = prf(MatchCounts(0, 0, 0))
    assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)


@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_prf_harmonic_mean_identity(tp, fp, fn):
    s = prf(MatchCounts(tp, fp, fn))
    assert 0 <= s.precision <= 1 and 0 <= s.recall <= 1 and 0 <= s.f1 <= 1
    if s.precision + s.recall > 0:
        assert abs(s.f1 - 2 * s.precision * s.recall / (s.precision + s.recall)) <= 1e-12
    else:
        assert s.f1 == 0


def hand_ap_101(flags, num_gt):
    """Direct transcription of 101-point interpolation, loop by loop."""
    tp = fp = 0
    points = []
    for f in flags:
        tp += f
        fp += not f
        points.append((tp / num_gt, tp / (tp + fp)))
    total = 0.0
    for k in range(101):
        r = k / 100
        total += max((p for rc, p in points if rc >= r), default=0.0)
    return total / 101


def test_ap_fixture():
    # hand oracle: (51 * 1.0 + 50 * 2/3) / 101
    expected = (51 * 1.0 + 50 * (2 / 3)) / 101
    assert expected == pytest.approx(0.8350, abs=5e-5)
    assert average_precision(np.array([True, False, True]), 2) == pytest.approx(expected, abs=1e-12)
    assert hand_ap_101([True, False, True], 2) == pytest.approx(expected, abs=1e-12)
    assert average_precision(np.array([True, False, True]), 2, "exact") == pytest.approx(0.5 + 0.5 * 2 / 3)


def test_ap_matches_hand_oracle_on_random_lists(rng):
    for _ in range(200):
        n = int(rng.integers(0, 30))
        flags = list(rng.random(n) < 0.5)
        num_gt = max(1, sum(flags) + int(rng.integers(0, 4)))
        assert average_precision(np.array(flags, dtype=bool), num_gt) == pytest.approx(hand_ap_101(flags, num_gt), abs=1e-12)


def _fixture_dataset():
    g = [gt(0, (0, 0, 10, 10)), gt(0, (100, 100, 110, 110))]
    d = [
        det([0.9, 0.1], bbox=(0, 0, 10, 10)),  # TP
        det([0.8, 0.2], bbox=(50, 50, 60, 60)),  # FP
        det([0.7, 0.3], bbox=(100, 100, 110, 110)),  # TP
    ]
    return {"a": d}, {"a": g}


def test_ap_per_class_fixture():
    dets, gts = _fixture_dataset()
    assert ap_per_class(dets, gts, 0.5) == {0: pytest.approx((51 + 50 * 2 / 3) / 101, abs=1e-6)}
    assert coco_ap(dets, gts).ap_50 == pytest.approx(0.8350, abs=1e-4)


def test_ap_perfect_and_empty():
    g = {"a": [gt(0), gt(1, (20, 20, 30, 30))]}
    d = {"a": [det([1, 0]), det([0, 1], bbox=(20, 20, 30, 30))]}
    report = coco_ap(d, g)
    assert report.ap_50_95 == 1.0
    assert ap_per_class({}, g) == {0: 0.0, 1: 0.0}


def test_classes_without_ground_truth_are_omitted():
    d = {"a": [det([0, 0, 1])]}
    g = {"a": [gt(0)]}
    assert set(ap_per_class(d, g)) == {0}


def test_coco_ap_strict_threshold_step():
    # IoU exactly 0.6: TP at 0.50 and 0.55 only
    d = {"a": [det([1, 0], bbox=(0, 0, 10, 6))]}
    g = {"a": [gt(0)]}
    assert iou((0, 0, 10, 6), (0, 0, 10, 10)) == 0.6
    report = coco_ap(d, g)
    assert [report.ap_per_iou[t] for t in COCO_IOU_THRESHOLDS] == [1.0, 1.0] + [0.0] * 8
    assert report.ap_50_95 == pytest.approx(0.2)
    assert report.ap_75 == 0.0


def _rescale(dets, factor):
    return {k: [Detection(d.image_id, d.bbox, d.class_probs, d.objectness * factor) for d in v] for k, v in dets.items()}


def test_ap_invariant_under_score_rescaling(rng):
    for _ in range(20):
        ds = random_dataset(rng, n_classes=3, max_dets=15, canvas=60.0)
        base = ap_per_class(ds.detections, ds.ground_truth)
        # rescaling objectness by a power of two keeps the ranking exactly
        assert ap_per_class(_rescale(ds.detections, 0.5), ds.ground_truth) == base


def test_ap_non_increasing_in_iou_threshold(rng):
    for _ in range(20):
        ds = random_dataset(rng, n_classes=3, max_dets=15, canvas=60.0)
        report = coco_ap(ds.detections, ds.ground_truth)
        values = [report.ap_per_iou[t] for t in COCO_IOU_THRESHOLDS]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))
        assert report.ap_50_95 == pytest.approx(np.mean(values))
