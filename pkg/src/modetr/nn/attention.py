"""
Multi-head scaled dot-product attention.
"""
from __future__ import annotations

import math
from typing import Optional

from modetr.autograd import Tensor, ops
from modetr.exceptions import ModetrShapeError
from modetr.nn.layers import linear
from modetr.nn.params import AttentionParams

__all__ = ['multi_head_attention']


def multi_head_attention(
        p: AttentionParams,
        q: Tensor,
        kv: Tensor,
        q_pos: Optional[Tensor] = None,
        k_pos: Optional[Tensor] = None,
) -> tuple[Tensor, Tensor]:
    """
    Attends ``Lq`` queries over ``Lk`` key/value tokens.

    Positional tensors are added to queries and keys only, never to values.
    Returns the ``Lq×D`` output and the ``h×Lq×Lk`` attention weights
    (each row sums to one).
    """
    dim = p.dim
    if q.ndim != 2 or kv.ndim != 2 or q.shape[1] != dim or kv.shape[1] != dim:
        raise ModetrShapeError(
            f"attention: inputs {q.shape} and {kv.shape} do not match model dim {dim}",
        )
    if q_pos is not None and q_pos.shape != q.shape:
        raise ModetrShapeError(f"attention: query positions {q_pos.shape} vs queries {q.shape}")
    if k_pos is not None and k_pos.shape != kv.shape:
        raise ModetrShapeError(f"attention: key positions {k_pos.shape} vs keys {kv.shape}")

    q_in = q if q_pos is None else ops.add(q, q_pos)
    k_in = kv if k_pos is None else ops.add(kv, k_pos)
    queries = linear(p.q_proj, q_in)
    keys = linear(p.k_proj, k_in)
    values = linear(p.v_proj, kv)

    head_dim = p.head_dim
    factor = 1.0 / math.sqrt(head_dim)
    head_outputs = []
    head_weights = []
    for head in range(p.num_heads):
        lo, hi = head * head_dim, (head + 1) * head_dim
        q_h = ops.slice_along(queries, 1, lo, hi)
        k_h = ops.slice_along(keys, 1, lo, hi)
        v_h = ops.slice_along(values, 1, lo, hi)
        scores = ops.scale(ops.matmul(q_h, ops.transpose(k_h)), factor)
        weights = ops.softmax(scores, axis=1)
        head_outputs.append(ops.matmul(weights, v_h))
        head_weights.append(ops.reshape(weights, (1,) + weights.shape))

    out = linear(p.out_proj, ops.concat(head_outputs, axis=1))
    return out, ops.concat(head_weights, axis=0)
