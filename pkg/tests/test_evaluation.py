from __future__ import annotations

import numpy as np
import pytest

from modetr.autograd import Tensor
from modetr.boxes import BoxCXCYWH, GroundTruthObject, MotionLabel
from modetr.evaluation import (
    IOU_THRESHOLDS, ClassMetrics, MetricReport, ScoredDetection,
    average_precision, detections_from_predictions, map_report, match_detections,
)
from modetr.exceptions import ModetrContractError
from modetr.model import PredictionSet

MOVING = MotionLabel.MOVING
STATIC = MotionLabel.STATIC


def gt(cx, cy, size=0.2, label=MOVING):
    return GroundTruthObject(BoxCXCYWH(cx, cy, size, size), label)


def det(cx, cy, score, size=0.2, label=MOVING):
    return ScoredDetection(BoxCXCYWH(cx, cy, size, size), label, score)


def test_iou_sweep():
    assert IOU_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)


@pytest.mark.parametrize(
    ("flags", "n_gt", "expected"),
    [
        pytest.param([True], 1, 1.0, id="single_hit"),
        pytest.param([False, True], 1, 0.5, id="false_positive_first"),
        pytest.param([True, False], 1, 1.0, id="false_positive_last"),
        pytest.param([True], 2, 0.5, id="half_recall"),
        pytest.param([True, False, True], 2, 0.5 + 0.5 * 2 / 3, id="envelope"),
        pytest.param([], 3, 0.0, id="no_detections"),
        pytest.param([], 0, 1.0, id="nothing_at_all"),
        pytest.param([False], 0, 0.0, id="detections_without_truth"),
        pytest.param([False, False], 2, 0.0, id="all_false"),
    ],
)
def test_average_precision_micro_scenarios(flags, n_gt, expected):
    assert average_precision(flags, n_gt) == pytest.approx(expected)


def reference_ap(flags, n_gt):
    # Sum over hits of the best precision reached at or after that hit
    hits = np.asarray(flags, dtype=float)
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    total = 0.0
    for k in range(len(hits)):
        if hits[k]:
            total += precision[k:].max()
    return total / n_gt


@pytest.mark.parametrize("seed", [pytest.param(seed, id=f"flags{seed}") for seed in range(50)])
def test_average_precision_matches_reference(seed):
    rng = np.random.default_rng(seed)
    length = int(rng.integers(1, 15))
    flags = list(rng.random(length) < 0.5)
    n_gt = int(sum(flags) + rng.integers(0, 3)) or 1
    assert average_precision(flags, n_gt) == pytest.approx(reference_ap(flags, n_gt))


def test_duplicate_detection_is_false_positive():
    gts = [gt(0.5, 0.5)]
    flags = match_detections([det(0.5, 0.5, 0.9), det(0.5, 0.5, 0.8)], gts, 0.5)
    assert flags == [True, False]


def test_detection_claims_best_unclaimed_truth():
    gts = [gt(0.3, 0.5), gt(0.34, 0.5)]
    dets = [det(0.33, 0.5, 0.9), det(0.3, 0.5, 0.8)]
    assert match_detections(dets, gts, 0.5) == [True, True]


def test_flags_come_back_in_input_order():
    gts = [gt(0.5, 0.5)]
    assert match_detections([det(0.5, 0.5, 0.2), det(0.5, 0.5, 0.9)], gts, 0.5) == [False, True]


def test_score_ties_prefer_better_overlap():
    gts = [gt(0.5, 0.5)]
    flags = match_detections([det(0.54, 0.5, 0.7), det(0.5, 0.5, 0.7)], gts, 0.5)
    assert flags == [False, True]


@pytest.mark.parametrize("thresh", [0.0, 1.0, -0.5])
def test_match_rejects_threshold_outside_unit_interval(thresh):
    with pytest.raises(ModetrContractError):
        match_detections([], [], thresh)


def test_shifted_detection_sweep():
    # Shifting a 0.2 box by 0.04 gives IoU 0.16 / 0.24 = 2/3
    report = map_report([[det(0.54, 0.5, 0.9)]], [[gt(0.5, 0.5)]], classes=[MOVING])
    metrics = report.per_class['moving']
    assert metrics.map50 == 1.0
    assert metrics.map75 == 0.0
    assert metrics.map_total == pytest.approx(0.4)


def test_report_separates_classes():
    gts = [[gt(0.3, 0.3), gt(0.7, 0.7, label=STATIC)]]
    dets = [[det(0.3, 0.3, 0.9), det(0.7, 0.7, 0.8, label=MOVING)]]
    report = map_report(dets, gts)
    assert report.per_class['moving'].map50 == pytest.approx(1.0)
    assert report.per_class['static'].map50 == 0.0
    assert report.mean.map50 == pytest.approx(0.5)
    assert report.map50 == pytest.approx(1.0)
    assert report.num_images == 1


def test_report_pools_detections_across_images():
    gts = [[gt(0.5, 0.5)], [gt(0.5, 0.5)]]
    dets = [[det(0.5, 0.5, 0.9), det(0.1, 0.1, 0.95)], [det(0.5, 0.5, 0.6)]]
    report = map_report(dets, gts, classes=[MOVING])
    # ranked FP, TP, TP: the envelope lifts the first hit to precision 2/3
    assert report.map50 == pytest.approx(2 / 3)


def test_report_is_invariant_to_detection_order():
    rng = np.random.default_rng(3)
    gts = [[gt(*rng.uniform(0.2, 0.8, 2), label=MotionLabel(int(rng.integers(2)))) for _ in range(3)]
           for _ in range(4)]
    dets = [
        [
            det(*rng.uniform(0.2, 0.8, 2), float(rng.uniform()), label=MotionLabel(int(rng.integers(2))))
            for _ in range(5)
        ]
        for _ in range(4)
    ]
    shuffled = [[image[i] for i in rng.permutation(len(image))] for image in dets]
    assert map_report(dets, gts).to_dict() == map_report(shuffled, gts).to_dict()


@pytest.mark.parametrize("seed", [pytest.param(seed, id=f"images{seed}") for seed in range(20)])
def test_sweep_average_never_exceeds_loosest_threshold(seed):
    rng = np.random.default_rng(seed)
    gts = [[gt(*rng.uniform(0.2, 0.8, 2))] for _ in range(3)]
    dets = [
        [det(*rng.uniform(0.2, 0.8, 2), float(rng.uniform())) for _ in range(int(rng.integers(0, 4)))]
        + [det(g[0].box.cx + rng.uniform(-0.05, 0.05), g[0].box.cy, float(rng.uniform()))]
        for g in gts
    ]
    metrics = map_report(dets, gts, classes=[MOVING]).per_class['moving']
    assert metrics.map_total <= metrics.map50 + 1e-12
    assert metrics.map75 <= metrics.map50 + 1e-12


def test_empty_dataset_report():
    report = map_report([], [])
    assert report.num_images == 0
    assert report.map50 == 1.0


def test_map_report_rejects_mismatched_lengths():
    with pytest.raises(ModetrContractError):
        map_report([[]], [])


def test_report_dict_round_trip():
    report = map_report([[det(0.5, 0.5, 0.9)]], [[gt(0.5, 0.5), gt(0.2, 0.2, label=STATIC)]])
    data = report.to_dict()
    assert data['headline_class'] == 'moving'
    assert data['map50'] == report.per_class['moving'].map50
    assert MetricReport.from_dict(data) == report


def test_average_of_reports():
    first = MetricReport({'moving': ClassMetrics(0.2, 0.4, 0.0)}, ClassMetrics(0.2, 0.4, 0.0), 3)
    second = MetricReport({'moving': ClassMetrics(0.4, 0.8, 0.2)}, ClassMetrics(0.4, 0.8, 0.2), 3)
    mean = MetricReport.average([first, second])
    assert mean.map_total == pytest.approx(0.3)
    assert mean.map50 == pytest.approx(0.6)
    assert mean.map75 == pytest.approx(0.1)
    with pytest.raises(ModetrContractError):
        MetricReport.average([])


@pytest.mark.parametrize(
    ("label", "score"),
    [
        pytest.param(MotionLabel.NO_OBJECT, 0.5, id="no_object_label"),
        pytest.param(MOVING, 1.5, id="score_above_one"),
    ],
)
def test_scored_detection_validation(label, score):
    with pytest.raises(ModetrContractError):
        ScoredDetection(BoxCXCYWH(0.5, 0.5, 0.1, 0.1), label, score)


def test_detections_from_predictions():
    logits = np.array([[3.0, 0.0, 0.0], [0.0, 0.0, 3.0], [0.0, 2.0, 0.0], [0.1, 0.0, 0.0]])
    boxes = np.tile([0.5, 0.5, 0.2, 0.2], (4, 1))
    preds = PredictionSet(
        class_logits=Tensor(logits),
        boxes=Tensor(boxes),
        cross_attention=Tensor(np.ones((1, 1, 4, 1))),
        memory_blocks=1,
        feature_size=(1, 1),
    )
    dets = detections_from_predictions(preds)
    assert [(d.slot, d.label) for d in dets] == [(0, MOVING), (2, STATIC), (3, MOVING)]
    assert dets[0].score == pytest.approx(np.exp(3.0) / (np.exp(3.0) + 2.0))
    kept = detections_from_predictions(preds, threshold=0.5)
    assert [d.slot for d in kept] == [0, 2]
