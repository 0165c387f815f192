"""
Forward passes over a dataset and metric computation.
"""
from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

from modetr.autograd import no_grad
from modetr.boxes import GroundTruthObject
from modetr.evaluation import MetricReport, ScoredDetection, detections_from_predictions, map_report
from modetr.exceptions import ModetrContractError
from modetr.model import ModelConfig, ModetrParams, PredictionSet, forward, model_inputs
from modetr.runner.train import check_compatible
from modetr.synth import Dataset, SamplePair

__all__ = ['Detector', 'model_detector', 'oracle_detector', 'predict_sample', 'detect_dataset', 'evaluate']

logger = logging.getLogger(__name__)

#: Maps a sample to its detections
Detector = Callable[[SamplePair], list[ScoredDetection]]


def predict_sample(model: ModelConfig, params: ModetrParams, sample: SamplePair) -> PredictionSet:
    """
    Forward pass without recording a tape.
    """
    with no_grad():
        return forward(model, params, model_inputs(model, sample))


def model_detector(model: ModelConfig, params: ModetrParams, threshold: float = 0.0) -> Detector:
    def detect(sample: SamplePair) -> list[ScoredDetection]:
        return detections_from_predictions(predict_sample(model, params, sample), threshold)
    return detect


def oracle_detector(sample: SamplePair) -> list[ScoredDetection]:
    """
    Reports every ground-truth object with full confidence.
    """
    return [ScoredDetection(gt.box, gt.label, 1.0) for gt in sample.objects]


def detect_dataset(dataset: Dataset, detector: Detector, workers: int = 1) -> list[list[ScoredDetection]]:
    """
    Runs the detector on every sample, in order, with up to ``workers`` threads.
    """
    if workers < 1:
        raise ModetrContractError(f"worker count must be positive, got {workers}")
    if workers == 1:
        return [detector(sample) for sample in dataset.samples]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(detector, dataset.samples))


def evaluate(
        model: ModelConfig,
        params: ModetrParams,
        dataset: Dataset,
        workers: int = 1,
        detector: Optional[Detector] = None,
) -> MetricReport:
    """
    Computes the metric report of a model (or of an injected detector) on a dataset.
    """
    check_compatible(model, dataset)
    detector = detector or model_detector(model, params)
    dets = detect_dataset(dataset, detector, workers)
    gts: list[list[GroundTruthObject]] = [list(s.objects) for s in dataset.samples]
    report = map_report(dets, gts)
    logger.info(
        "evaluated %d samples: mAP %.4f, mAP50 %.4f, mAP75 %.4f",
        len(dataset), report.map_total, report.map50, report.map75,
    )
    return report
