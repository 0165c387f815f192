"""
This modetr subpackage implements bipartite matching between predicted slots
and ground-truth objects together with the set-prediction training loss.
"""
from __future__ import annotations

from modetr.matching.cost import CostWeights, matching_cost, softmax_probs
from modetr.matching.hungarian import Assignment, hungarian
from modetr.matching.loss import LossParts, giou_tensor, match_and_loss, set_loss

__all__ = [
    'CostWeights', 'matching_cost', 'softmax_probs',
    'Assignment', 'hungarian',
    'LossParts', 'giou_tensor', 'set_loss', 'match_and_loss',
]
