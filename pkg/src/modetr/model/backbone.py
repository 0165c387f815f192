"""
Small convolutional backbone and the map/token conversions around it.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from modetr.autograd import Tensor, ops
from modetr.exceptions import ModetrShapeError
from modetr.model.config import BACKBONE_STRIDE
from modetr.nn import ConvParams, conv2d

__all__ = ['BackboneParams', 'backbone_forward', 'flatten_tokens', 'unflatten_tokens']


@dataclass
class BackboneParams:
    """
    Three 3×3 stride-2 convolution blocks with ReLU,
    channel plan ``C_in → c1 → c2 → D``.
    """
    blocks: list[ConvParams]

    @property
    def in_channels(self) -> int:
        return self.blocks[0].c_in

    @classmethod
    def init(
            cls, rng: np.random.Generator,
            in_channels: int, channels: Sequence[int], d_model: int,
    ) -> BackboneParams:
        plan = [in_channels, *channels, d_model]
        return cls([
            ConvParams.init(rng, c_in, c_out, kernel=3, stride=2)
            for c_in, c_out in zip(plan[:-1], plan[1:])
        ])


def backbone_forward(params: BackboneParams, image: Tensor) -> Tensor:
    """
    Encodes a ``C_in×H×W`` image into a ``D×H/8×W/8`` feature map.
    """
    if image.ndim != 3 or image.shape[0] != params.in_channels:
        raise ModetrShapeError(
            f"backbone expects {params.in_channels}×H×W input, got {image.shape}",
        )
    _, height, width = image.shape
    if height % BACKBONE_STRIDE or width % BACKBONE_STRIDE:
        raise ModetrShapeError(
            f"backbone input {height}×{width} is not divisible by {BACKBONE_STRIDE}",
        )
    x = image
    for block in params.blocks:
        x = ops.relu(conv2d(block, x))
    return x


def flatten_tokens(feature_map: Tensor) -> Tensor:
    """
    Flattens a ``D×H'×W'`` map into ``H'·W'×D`` tokens in row-major pixel order:
    token i is pixel ``(i div W', i mod W')``.
    """
    if feature_map.ndim != 3:
        raise ModetrShapeError(f"expected a D×H×W feature map, got {feature_map.shape}")
    dim, feat_h, feat_w = feature_map.shape
    return ops.transpose(ops.reshape(feature_map, (dim, feat_h * feat_w)))


def unflatten_tokens(tokens: Tensor, feat_h: int, feat_w: int) -> Tensor:
    """
    Inverse of :func:`flatten_tokens`.
    """
    if tokens.ndim != 2 or tokens.shape[0] != feat_h * feat_w:
        raise ModetrShapeError(f"cannot unflatten tokens {tokens.shape} into {feat_h}×{feat_w}")
    return ops.reshape(ops.transpose(tokens), (tokens.shape[1], feat_h, feat_w))
