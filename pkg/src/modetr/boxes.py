"""
Data definitions for boxes and ground-truth objects,
plus IoU and generalized IoU on plain numbers.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from modetr.exceptions import ModetrContractError

__all__ = [
    'MotionLabel', 'BoxCXCYWH', 'GroundTruthObject',
    'box_iou', 'generalized_iou', 'cxcywh_to_corners', 'pairwise_iou', 'pairwise_giou',
]


class MotionLabel(enum.IntEnum):
    """
    Class indices of the prediction head.
    """
    MOVING = 0
    STATIC = 1
    NO_OBJECT = 2

    @property
    def slug(self) -> str:
        return self.name.lower().replace('_', '-')

    @classmethod
    def from_slug(cls, slug: str) -> MotionLabel:
        try:
            return cls[slug.upper().replace('-', '_')]
        except KeyError:
            raise ValueError(f"unknown motion label {slug!r}") from None


#: Labels that ground-truth objects and detections may carry
OBJECT_LABELS = (MotionLabel.MOVING, MotionLabel.STATIC)


@dataclass(frozen=True)
class BoxCXCYWH:
    """
    Normalized bounding box as center and size, each coordinate in [0, 1].
    """
    cx: float
    cy: float
    w: float
    h: float

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    def corners(self) -> tuple[float, float, float, float]:
        """
        Converts to ``(x0, y0, x1, y1)`` corner form.
        """
        return (
            self.cx - 0.5 * self.w, self.cy - 0.5 * self.h,
            self.cx + 0.5 * self.w, self.cy + 0.5 * self.h,
        )

    @classmethod
    def from_corners(cls, x0: float, y0: float, x1: float, y1: float) -> BoxCXCYWH:
        return cls(0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0)


@dataclass(frozen=True)
class GroundTruthObject:
    """
    Annotated object: a box and its motion label.
    """
    box: BoxCXCYWH
    label: MotionLabel

    def __post_init__(self):
        if self.label not in OBJECT_LABELS:
            raise ModetrContractError(f"ground truth label must be moving or static, got {self.label}")
        if not (self.box.w > 0 and self.box.h > 0):
            raise ModetrContractError(f"ground truth box must have positive size, got {self.box}")

    def to_record(self) -> dict:
        return {
            'cx': self.box.cx, 'cy': self.box.cy, 'w': self.box.w, 'h': self.box.h,
            'label': self.label.slug,
        }

    @classmethod
    def from_record(cls, record: dict) -> GroundTruthObject:
        box = BoxCXCYWH(
            float(record['cx']), float(record['cy']), float(record['w']), float(record['h']),
        )
        return cls(box, MotionLabel.from_slug(record['label']))


def _checked_corners(box: BoxCXCYWH) -> tuple[float, float, float, float]:
    if not (box.w > 0 and box.h > 0):
        raise ModetrContractError(f"box must have positive width and height, got {box}")
    return box.corners()


def _iou_and_union(a: BoxCXCYWH, b: BoxCXCYWH) -> tuple[float, float]:
    ax0, ay0, ax1, ay1 = _checked_corners(a)
    bx0, by0, bx1, by1 = _checked_corners(b)
    inter_w = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    inter_h = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = inter_w * inter_h
    union = a.w * a.h + b.w * b.h - inter
    return inter / union, union


def box_iou(a: BoxCXCYWH, b: BoxCXCYWH) -> float:
    """
    Intersection over union of two boxes with positive size.
    """
    iou, _ = _iou_and_union(a, b)
    return iou


def generalized_iou(a: BoxCXCYWH, b: BoxCXCYWH) -> float:
    """
    IoU minus the fraction of the tightest enclosing box
    that is covered by neither box; lies in (-1, 1].
    """
    iou, union = _iou_and_union(a, b)
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    hull = (max(ax1, bx1) - min(ax0, bx0)) * (max(ay1, by1) - min(ay0, by0))
    return iou - (hull - union) / hull


def cxcywh_to_corners(boxes: np.ndarray) -> np.ndarray:
    """
    Converts an ``N×4`` array of center-size boxes into corner form.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    half = 0.5 * boxes[:, 2:]
    return np.concatenate([boxes[:, :2] - half, boxes[:, :2] + half], axis=1)


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    IoU matrix of shape ``N×M`` between two arrays of center-size boxes.
    """
    iou, _, _ = _pairwise(a, b)
    return iou


def pairwise_giou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Generalized IoU matrix of shape ``N×M`` between two arrays of center-size boxes.
    """
    iou, union, hull = _pairwise(a, b)
    return iou - (hull - union) / hull


def _pairwise(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ca = cxcywh_to_corners(a)[:, None, :]
    cb = cxcywh_to_corners(b)[None, :, :]
    area_a = (ca[..., 2] - ca[..., 0]) * (ca[..., 3] - ca[..., 1])
    area_b = (cb[..., 2] - cb[..., 0]) * (cb[..., 3] - cb[..., 1])
    inter_w = np.clip(np.minimum(ca[..., 2], cb[..., 2]) - np.maximum(ca[..., 0], cb[..., 0]), 0, None)
    inter_h = np.clip(np.minimum(ca[..., 3], cb[..., 3]) - np.maximum(ca[..., 1], cb[..., 1]), 0, None)
    inter = inter_w * inter_h
    union = area_a + area_b - inter
    hull_w = np.maximum(ca[..., 2], cb[..., 2]) - np.minimum(ca[..., 0], cb[..., 0])
    hull_h = np.maximum(ca[..., 3], cb[..., 3]) - np.minimum(ca[..., 1], cb[..., 1])
    return inter / union, union, hull_w * hull_h
