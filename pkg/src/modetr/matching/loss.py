"""
Differentiable set-prediction loss over a fixed assignment.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from modetr.autograd import Tensor, ops
from modetr.boxes import GroundTruthObject, MotionLabel, cxcywh_to_corners
from modetr.matching.cost import CostWeights, matching_cost
from modetr.matching.hungarian import Assignment, hungarian

if TYPE_CHECKING:
    from modetr.model.network import PredictionSet

__all__ = ['LossParts', 'giou_tensor', 'set_loss', 'match_and_loss']


@dataclass
class LossParts:
    """
    Weighted total and the three unweighted loss components.
    """
    total: Tensor
    loss_cls: Tensor
    loss_l1: Tensor
    loss_giou: Tensor

    def as_floats(self) -> dict[str, float]:
        return {
            'total': self.total.item(),
            'loss_cls': self.loss_cls.item(),
            'loss_l1': self.loss_l1.item(),
            'loss_giou': self.loss_giou.item(),
        }


def giou_tensor(pred: Tensor, target: np.ndarray) -> Tensor:
    """
    Generalized IoU between matching rows of a ``K×4`` predicted box tensor
    and a ``K×4`` constant target array (both center-size).
    Differentiable with respect to the predicted coordinates.
    """
    def column(i):
        return ops.slice_along(pred, 1, i, i + 1)

    cx, cy, w, h = column(0), column(1), column(2), column(3)
    half_w, half_h = ops.scale(w, 0.5), ops.scale(h, 0.5)
    px0, px1 = ops.sub(cx, half_w), ops.add(cx, half_w)
    py0, py1 = ops.sub(cy, half_h), ops.add(cy, half_h)

    corners = cxcywh_to_corners(target)
    tx0, ty0, tx1, ty1 = (Tensor(corners[:, i:i + 1]) for i in range(4))
    target_area = Tensor((corners[:, 2:3] - corners[:, 0:1]) * (corners[:, 3:4] - corners[:, 1:2]))

    inter_w = ops.relu(ops.sub(ops.minimum(px1, tx1), ops.maximum(px0, tx0)))
    inter_h = ops.relu(ops.sub(ops.minimum(py1, ty1), ops.maximum(py0, ty0)))
    inter = ops.mul(inter_w, inter_h)
    union = ops.sub(ops.add(ops.mul(w, h), target_area), inter)
    iou = ops.div(inter, union)

    hull_w = ops.sub(ops.maximum(px1, tx1), ops.minimum(px0, tx0))
    hull_h = ops.sub(ops.maximum(py1, ty1), ops.minimum(py0, ty0))
    hull = ops.mul(hull_w, hull_h)
    giou = ops.sub(iou, ops.div(ops.sub(hull, union), hull))
    return ops.reshape(giou, (pred.shape[0],))


def set_loss(
        preds: PredictionSet,
        gts: Sequence[GroundTruthObject],
        assignment: Assignment,
        weights: CostWeights,
) -> LossParts:
    """
    Computes the set loss for a given assignment.

    - Classification: weighted cross-entropy over all N_q slots,
      target = matched label or no-object, no-object slots weighted
      by ``weights.no_object``, normalized by the sum of slot weights
      (1 when every slot weight is zero).
    - Box terms: L1 and ``1 - GIoU`` over matched pairs only,
      normalized by the number of ground truths (1 when there are none).
    """
    num_queries = preds.num_queries
    assignment.validate(len(gts), num_queries)

    targets = np.full(num_queries, int(MotionLabel.NO_OBJECT))
    for gt_index, pred_index in assignment.pairs:
        targets[pred_index] = int(gts[gt_index].label)
    slot_weights = np.where(targets == MotionLabel.NO_OBJECT, weights.no_object, 1.0)
    picker = np.zeros((num_queries, len(MotionLabel)))
    picker[np.arange(num_queries), targets] = slot_weights

    log_probs = ops.log_softmax(preds.class_logits, axis=1)
    weighted_nll = ops.neg(ops.sum(ops.mul(log_probs, Tensor(picker))))
    weight_sum = float(slot_weights.sum())
    loss_cls = ops.scale(weighted_nll, 1.0 / weight_sum if weight_sum > 0 else 1.0)

    if assignment.pairs:
        normalizer = 1.0 / len(gts)
        matched = ops.gather_rows(preds.boxes, assignment.pred_indices)
        target_boxes = np.stack([gts[i].box.as_array() for i in assignment.gt_indices])
        loss_l1 = ops.scale(ops.sum(ops.absolute(ops.sub(matched, Tensor(target_boxes)))), normalizer)
        giou = giou_tensor(matched, target_boxes)
        loss_giou = ops.scale(ops.sum(ops.sub(1.0, giou)), normalizer)
    else:
        loss_l1 = Tensor(0.0)
        loss_giou = Tensor(0.0)

    total = ops.add(
        ops.add(ops.scale(loss_cls, weights.cls), ops.scale(loss_l1, weights.l1)),
        ops.scale(loss_giou, weights.giou),
    )
    return LossParts(total, loss_cls, loss_l1, loss_giou)


def match_and_loss(
        preds: PredictionSet,
        gts: Sequence[GroundTruthObject],
        weights: CostWeights,
) -> tuple[Assignment, LossParts]:
    """
    Runs the matcher outside the tape, then the differentiable loss.
    """
    assignment = hungarian(matching_cost(preds, gts, weights))
    return assignment, set_loss(preds, gts, assignment, weights)
