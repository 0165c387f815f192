"""
This modetr subpackage scores detections against ground truth
with mean average precision at several IoU thresholds.
"""
from __future__ import annotations

from modetr.evaluation.detections import detections_from_predictions
from modetr.evaluation.metrics import (
    IOU_THRESHOLDS, ClassMetrics, MetricReport, ScoredDetection,
    average_precision, map_report, match_detections,
)

__all__ = [
    'IOU_THRESHOLDS', 'ScoredDetection', 'ClassMetrics', 'MetricReport',
    'match_detections', 'average_precision', 'map_report', 'detections_from_predictions',
]
