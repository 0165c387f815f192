"""
Greedy IoU matching of scored detections, all-point average precision
and the mAP report over moving and static objects.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from modetr.boxes import OBJECT_LABELS, BoxCXCYWH, GroundTruthObject, MotionLabel, pairwise_iou
from modetr.exceptions import ModetrContractError

__all__ = [
    'IOU_THRESHOLDS', 'ScoredDetection', 'ClassMetrics', 'MetricReport',
    'match_detections', 'average_precision', 'map_report',
]

logger = logging.getLogger(__name__)

#: IoU sweep behind the total mAP: 0.50, 0.55, ..., 0.95
IOU_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * step, 2) for step in range(10))


@dataclass(frozen=True)
class ScoredDetection:
    """
    One detection reported for an image.
    """
    box: BoxCXCYWH
    label: MotionLabel

    #: Softmax probability of the label
    score: float

    #: Prediction slot the detection came from (if any)
    slot: Optional[int] = None

    def __post_init__(self):
        if self.label not in OBJECT_LABELS:
            raise ModetrContractError(f"detection label must be moving or static, got {self.label}")
        if not 0.0 <= self.score <= 1.0:
            raise ModetrContractError(f"detection score must lie in [0, 1], got {self.score}")

    def to_record(self) -> dict:
        return {
            'cx': self.box.cx, 'cy': self.box.cy, 'w': self.box.w, 'h': self.box.h,
            'label': self.label.slug, 'score': self.score, 'slot': self.slot,
        }


def _max_ious(dets: Sequence[ScoredDetection], gts: Sequence[GroundTruthObject]) -> np.ndarray:
    if not dets:
        return np.zeros((0, len(gts)))
    if not gts:
        return np.zeros((len(dets), 0))
    return pairwise_iou(
        np.stack([d.box.as_array() for d in dets]),
        np.stack([g.box.as_array() for g in gts]),
    )


def _ranking(dets: Sequence[ScoredDetection], ious: np.ndarray) -> list[int]:
    best = ious.max(axis=1) if ious.shape[1] else np.zeros(len(dets))
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, -best[i], i))


def match_detections(
        dets: Sequence[ScoredDetection],
        gts: Sequence[GroundTruthObject],
        iou_thresh: float,
) -> list[bool]:
    """
    Marks each detection as true positive or false positive.

    Detections are visited by descending score (ties: higher best IoU first,
    then input order); each claims the unclaimed ground truth with the highest
    IoU if that IoU reaches the threshold. Flags are returned in input order.
    Both lists must already hold a single class.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise ModetrContractError(f"IoU threshold must lie in (0, 1), got {iou_thresh}")
    ious = _max_ious(dets, gts)
    claimed = np.zeros(len(gts), dtype=bool)
    flags = [False] * len(dets)
    for index in _ranking(dets, ious):
        if not len(gts):
            break
        candidates = np.where(claimed, -1.0, ious[index])
        best = int(np.argmax(candidates))
        if candidates[best] >= iou_thresh:
            claimed[best] = True
            flags[index] = True
    return flags


def average_precision(flags: Sequence[bool], n_gt: int) -> float:
    """
    Area under the precision envelope (all-point interpolation)
    for TP/FP flags already ordered by descending score.

    Without ground truth the result is vacuous: 1 if there are
    no detections either, 0 otherwise.
    """
    if n_gt < 0:
        raise ModetrContractError(f"ground-truth count must be non-negative, got {n_gt}")
    if n_gt == 0:
        return 0.0 if len(flags) else 1.0
    if not len(flags):
        return 0.0
    hits = np.asarray(flags, dtype=bool)
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    recall = np.concatenate([[0.0], tp / n_gt, [1.0]])
    precision = np.concatenate([[0.0], tp / (tp + fp), [0.0]])
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.nonzero(recall[1:] != recall[:-1])[0]
    return float(np.sum((recall[steps + 1] - recall[steps]) * precision[steps + 1]))


@dataclass(frozen=True)
class ClassMetrics:
    #: Mean AP over the IoU sweep 0.50:0.95
    map_total: float
    #: AP at IoU 0.5
    map50: float
    #: AP at IoU 0.75
    map75: float

    def to_dict(self) -> dict:
        return {'map_total': self.map_total, 'map50': self.map50, 'map75': self.map75}

    @classmethod
    def mean_of(cls, items: Sequence[ClassMetrics]) -> ClassMetrics:
        if not items:
            return cls(0.0, 0.0, 0.0)
        return cls(
            float(np.mean([m.map_total for m in items])),
            float(np.mean([m.map50 for m in items])),
            float(np.mean([m.map75 for m in items])),
        )


@dataclass(frozen=True)
class MetricReport:
    """
    Per-class metrics, their mean over classes,
    and the headline numbers of the moving class.
    """
    per_class: dict[str, ClassMetrics]
    mean: ClassMetrics
    num_images: int
    headline_class: str = MotionLabel.MOVING.slug
    extras: dict = field(default_factory=dict)

    @property
    def headline(self) -> ClassMetrics:
        return self.per_class.get(self.headline_class, self.mean)

    @property
    def map_total(self) -> float:
        return self.headline.map_total

    @property
    def map50(self) -> float:
        return self.headline.map50

    @property
    def map75(self) -> float:
        return self.headline.map75

    def to_dict(self) -> dict:
        data = {
            'map_total': self.map_total,
            'map50': self.map50,
            'map75': self.map75,
            'headline_class': self.headline_class,
            'per_class': {name: m.to_dict() for name, m in self.per_class.items()},
            'mean': self.mean.to_dict(),
            'num_images': self.num_images,
        }
        data.update(self.extras)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> MetricReport:
        return cls(
            per_class={name: ClassMetrics(**m) for name, m in data['per_class'].items()},
            mean=ClassMetrics(**data['mean']),
            num_images=int(data['num_images']),
            headline_class=data.get('headline_class', MotionLabel.MOVING.slug),
        )

    @classmethod
    def average(cls, reports: Sequence[MetricReport]) -> MetricReport:
        """
        Element-wise mean of several reports over the same classes.
        """
        if not reports:
            raise ModetrContractError("cannot average zero metric reports")
        names = list(reports[0].per_class)
        return cls(
            per_class={
                name: ClassMetrics.mean_of([r.per_class[name] for r in reports]) for name in names
            },
            mean=ClassMetrics.mean_of([r.mean for r in reports]),
            num_images=reports[0].num_images,
            headline_class=reports[0].headline_class,
        )


def _class_ap(
        dets_per_image: Sequence[Sequence[ScoredDetection]],
        gts_per_image: Sequence[Sequence[GroundTruthObject]],
        iou_thresh: float,
) -> float:
    ranked = []
    n_gt = 0
    for image, (dets, gts) in enumerate(zip(dets_per_image, gts_per_image)):
        n_gt += len(gts)
        ious = _max_ious(dets, gts)
        best = ious.max(axis=1) if ious.shape[1] else np.zeros(len(dets))
        flags = match_detections(dets, gts, iou_thresh)
        for index, det in enumerate(dets):
            ranked.append((-det.score, -best[index], image, index, flags[index]))
    ranked.sort()
    return average_precision([entry[-1] for entry in ranked], n_gt)


def map_report(
        dets_per_image: Sequence[Sequence[ScoredDetection]],
        gts_per_image: Sequence[Sequence[GroundTruthObject]],
        classes: Sequence[MotionLabel] = OBJECT_LABELS,
) -> MetricReport:
    """
    Computes AP per class at IoU 0.5, at 0.75 and averaged over the 0.50:0.95 sweep,
    pooling detections of all images per class.
    """
    if len(dets_per_image) != len(gts_per_image):
        raise ModetrContractError(
            f"{len(dets_per_image)} detection lists for {len(gts_per_image)} images",
        )
    per_class = {}
    for label in classes:
        dets = [[d for d in image if d.label == label] for image in dets_per_image]
        gts = [[g for g in image if g.label == label] for image in gts_per_image]
        aps = {thresh: _class_ap(dets, gts, thresh) for thresh in IOU_THRESHOLDS}
        per_class[label.slug] = ClassMetrics(
            map_total=float(np.mean(list(aps.values()))),
            map50=aps[0.5],
            map75=aps[0.75],
        )
        logger.debug("class %s: %s", label.slug, per_class[label.slug])
    return MetricReport(
        per_class=per_class,
        mean=ClassMetrics.mean_of(list(per_class.values())),
        num_images=len(gts_per_image),
    )
