"""
Matching cost between predicted slots and ground-truth objects.
"""
from __future__ import annotations

import dataclasses
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from modetr.boxes import GroundTruthObject, pairwise_giou
from modetr.exceptions import ModetrConfigError, ModetrContractError

if TYPE_CHECKING:
    from modetr.model.network import PredictionSet

__all__ = ['CostWeights', 'matching_cost', 'softmax_probs']


@dataclass(frozen=True)
class CostWeights:
    """
    Weights shared by the matching cost and the set loss.
    """
    #: Weight of the class term
    cls: float = 1.0

    #: Weight of the L1 box term
    l1: float = 5.0

    #: Weight of the generalized IoU term
    giou: float = 2.0

    #: Relative weight of the no-object class in the classification loss
    no_object: float = 0.1

    def __post_init__(self):
        for fld in dataclasses.fields(self):
            value = getattr(self, fld.name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
                raise ModetrConfigError(
                    f"cost weight {fld.name!r} must be a non-negative number, got {value!r}",
                    field=f"cost.{fld.name}",
                )

    @classmethod
    def from_dict(cls, data: dict) -> CostWeights:
        known = {fld.name for fld in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ModetrConfigError(f"unknown cost weight {key!r}", field=f"cost.{key}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """
    Row-wise softmax on plain arrays (outside the tape).
    """
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def matching_cost(
        preds: PredictionSet,
        gts: Sequence[GroundTruthObject],
        weights: CostWeights,
) -> np.ndarray:
    """
    Builds the ``|gts|×N_q`` cost matrix

    ``-λ_cls·p_j(label_i) + λ_l1·‖b_i − b̂_j‖₁ + λ_giou·(1 − GIoU(b_i, b̂_j))``

    using the raw softmax probability for the class term.
    The matrix may be negative; it is a cost, not a loss.
    """
    num_queries = preds.num_queries
    if len(gts) > num_queries:
        raise ModetrContractError(
            f"cannot match {len(gts)} ground truths with only {num_queries} queries",
        )
    if not gts:
        return np.zeros((0, num_queries))
    probs = softmax_probs(preds.class_logits.data)
    pred_boxes = preds.boxes.data
    gt_boxes = np.stack([gt.box.as_array() for gt in gts])
    labels = np.array([int(gt.label) for gt in gts])
    cost_cls = -probs[:, labels].T
    cost_l1 = np.abs(gt_boxes[:, None, :] - pred_boxes[None, :, :]).sum(axis=2)
    cost_giou = 1.0 - pairwise_giou(gt_boxes, pred_boxes)
    return weights.cls * cost_cls + weights.l1 * cost_l1 + weights.giou * cost_giou
