"""
Basic neural building blocks composed from tensor operations.
"""
from __future__ import annotations

from collections.abc import Sequence

from modetr.autograd import Tensor, ops
from modetr.exceptions import ModetrContractError, ModetrShapeError
from modetr.nn.params import ConvParams, LayerNormParams, LinearParams

__all__ = ['linear', 'mlp', 'layer_norm', 'conv2d', 'conv1x1_tokens', 'embedding_lookup']


def linear(p: LinearParams, x: Tensor) -> Tensor:
    """
    Applies ``x·Wᵀ + b`` to every row of an ``L×D_in`` input.
    """
    if x.ndim != 2 or x.shape[1] != p.d_in:
        raise ModetrShapeError(
            f"linear: input {x.shape} does not match weight {p.weight.shape}",
        )
    return ops.add_bias(ops.matmul(x, ops.transpose(p.weight)), p.bias)


def mlp(layers: Sequence[LinearParams], x: Tensor) -> Tensor:
    """
    Stack of linear layers with ReLU between them (none after the last one).
    """
    for index, layer in enumerate(layers):
        x = linear(layer, x)
        if index < len(layers) - 1:
            x = ops.relu(x)
    return x


def layer_norm(p: LayerNormParams, x: Tensor) -> Tensor:
    return ops.layer_norm(x, p.gamma, p.beta)


def conv2d(p: ConvParams, x: Tensor) -> Tensor:
    """
    Convolves a ``C_in×H×W`` map; output is ``C_out×ceil(H/s)×ceil(W/s)``.
    """
    if p.kernel not in (1, 3):
        raise ModetrContractError(f"conv2d: kernel must be 1 or 3, got {p.kernel}")
    if p.stride not in (1, 2):
        raise ModetrContractError(f"conv2d: stride must be 1 or 2, got {p.stride}")
    padding = 1 if p.kernel == 3 else 0
    return ops.conv2d(x, p.weight, p.bias, stride=p.stride, padding=padding)


def conv1x1_tokens(p: ConvParams, tokens: Tensor) -> Tensor:
    """
    Applies a 1×1 convolution to an ``L×C_in`` token sequence,
    i.e. the same channel mixing at every token.
    """
    if p.kernel != 1:
        raise ModetrContractError(f"conv1x1_tokens: kernel must be 1, got {p.kernel}")
    if tokens.ndim != 2 or tokens.shape[1] != p.c_in:
        raise ModetrShapeError(
            f"conv1x1_tokens: channel mismatch between {tokens.shape} and {p.weight.shape}",
        )
    weight = ops.reshape(p.weight, (p.c_out, p.c_in))
    return ops.add_bias(ops.matmul(tokens, ops.transpose(weight)), p.bias)


def embedding_lookup(table: Tensor, indices: Sequence[int]) -> Tensor:
    """
    Gathers rows of a ``V×D`` table; gradients scatter back into the rows.
    """
    return ops.gather_rows(table, indices)
