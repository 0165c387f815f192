"""
Conversion of a prediction set into scored detections.
"""
from __future__ import annotations

from modetr.boxes import BoxCXCYWH, MotionLabel
from modetr.evaluation.metrics import ScoredDetection
from modetr.matching import softmax_probs
from modetr.model import PredictionSet

__all__ = ['detections_from_predictions']


def detections_from_predictions(preds: PredictionSet, threshold: float = 0.0) -> list[ScoredDetection]:
    """
    Keeps every slot whose most likely class is not no-object,
    scored by that class probability. No suppression is applied.
    """
    probs = softmax_probs(preds.class_logits.data)
    boxes = preds.boxes.data
    dets = []
    for slot, row in enumerate(probs):
        label = MotionLabel(int(row.argmax()))
        if label is MotionLabel.NO_OBJECT:
            continue
        score = float(min(1.0, max(0.0, row[label])))
        if score < threshold:
            continue
        cx, cy, w, h = (float(v) for v in boxes[slot])
        dets.append(ScoredDetection(BoxCXCYWH(cx, cy, w, h), label, score, slot=slot))
    return dets
