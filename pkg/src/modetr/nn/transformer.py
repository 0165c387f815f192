"""
Post-norm transformer encoder and decoder layers
(normalization applied after each residual sum).
"""
from __future__ import annotations

from collections.abc import Sequence
from typing import Optional

from modetr.autograd import Tensor, ops
from modetr.exceptions import ModetrShapeError
from modetr.nn.attention import multi_head_attention
from modetr.nn.layers import layer_norm, linear
from modetr.nn.params import DecoderLayerParams, EncoderLayerParams, LinearParams

__all__ = ['feed_forward', 'encoder_layer', 'encoder_stack', 'decoder_layer', 'decoder_stack']


def feed_forward(ff1: LinearParams, ff2: LinearParams, x: Tensor) -> Tensor:
    return linear(ff2, ops.relu(linear(ff1, x)))


def encoder_layer(p: EncoderLayerParams, tokens: Tensor, pos: Optional[Tensor]) -> Tensor:
    """
    Self-attention with positions on queries and keys, then feed-forward,
    each wrapped in a residual connection followed by layer normalization.
    """
    if pos is not None and pos.shape != tokens.shape:
        raise ModetrShapeError(f"encoder: positions {pos.shape} vs tokens {tokens.shape}")
    attended, _ = multi_head_attention(p.self_attn, tokens, tokens, pos, pos)
    x = layer_norm(p.norm1, ops.add(tokens, attended))
    return layer_norm(p.norm2, ops.add(x, feed_forward(p.ff1, p.ff2, x)))


def encoder_stack(
        layers: Sequence[EncoderLayerParams],
        tokens: Tensor,
        pos: Optional[Tensor],
) -> Tensor:
    for layer in layers:
        tokens = encoder_layer(layer, tokens, pos)
    return tokens


def decoder_layer(
        p: DecoderLayerParams,
        queries: Tensor,
        memory: Tensor,
        query_pos: Optional[Tensor],
        mem_pos: Optional[Tensor],
) -> tuple[Tensor, Tensor]:
    """
    Self-attention over the queries, cross-attention into the memory,
    then feed-forward.  Returns the updated ``N_q×D`` queries
    and the ``h×N_q×L`` cross-attention weights.
    """
    if query_pos is not None and query_pos.shape != queries.shape:
        raise ModetrShapeError(
            f"decoder: query positions {query_pos.shape} vs queries {queries.shape}",
        )
    if mem_pos is not None and mem_pos.shape != memory.shape:
        raise ModetrShapeError(f"decoder: memory positions {mem_pos.shape} vs memory {memory.shape}")
    attended, _ = multi_head_attention(p.self_attn, queries, queries, query_pos, query_pos)
    x = layer_norm(p.norm1, ops.add(queries, attended))
    crossed, cross_attn = multi_head_attention(p.cross_attn, x, memory, query_pos, mem_pos)
    x = layer_norm(p.norm2, ops.add(x, crossed))
    x = layer_norm(p.norm3, ops.add(x, feed_forward(p.ff1, p.ff2, x)))
    return x, cross_attn


def decoder_stack(
        layers: Sequence[DecoderLayerParams],
        queries: Tensor,
        memory: Tensor,
        query_pos: Optional[Tensor],
        mem_pos: Optional[Tensor],
) -> tuple[Tensor, list[Tensor]]:
    cross_attentions = []
    for layer in layers:
        queries, cross_attn = decoder_layer(layer, queries, memory, query_pos, mem_pos)
        cross_attentions.append(cross_attn)
    return queries, cross_attentions
