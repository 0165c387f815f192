"""
This modetr subpackage implements the neural building blocks
(linear maps, convolutions, embeddings, attention and transformer layers)
on top of the autograd tensor.
"""
from __future__ import annotations

from modetr.nn.attention import multi_head_attention
from modetr.nn.layers import conv1x1_tokens, conv2d, embedding_lookup, layer_norm, linear, mlp
from modetr.nn.params import (
    AttentionParams, ConvParams, DecoderLayerParams, EncoderLayerParams,
    LayerNormParams, LinearParams, count_parameters, embedding_table, named_parameters, param,
)
from modetr.nn.transformer import (
    decoder_layer, decoder_stack, encoder_layer, encoder_stack, feed_forward,
)

__all__ = [
    'LinearParams', 'LayerNormParams', 'ConvParams', 'AttentionParams',
    'EncoderLayerParams', 'DecoderLayerParams',
    'param', 'embedding_table', 'named_parameters', 'count_parameters',
    'linear', 'mlp', 'layer_norm', 'conv2d', 'conv1x1_tokens', 'embedding_lookup',
    'multi_head_attention', 'feed_forward',
    'encoder_layer', 'encoder_stack', 'decoder_layer', 'decoder_stack',
]
