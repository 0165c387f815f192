"""
Feature-level fusion of two token streams into one decoder memory.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from modetr.autograd import Tensor, ops
from modetr.exceptions import ModetrShapeError
from modetr.nn import ConvParams, conv1x1_tokens

__all__ = ['FusionParams', 'fuse_channel_halved', 'fuse_concat_project', 'fuse']


@dataclass
class FusionParams:
    """
    Either two per-stream 1×1 convolutions ``D → D/2`` (halving mode)
    or one 1×1 convolution ``2D → D`` applied after concatenation (projection mode).
    """
    first: ConvParams
    second: Optional[ConvParams] = None

    @property
    def mode(self) -> str:
        return 'project' if self.second is None else 'halve'

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int, mode: str = 'halve') -> FusionParams:
        if mode == 'project':
            return cls(ConvParams.init(rng, 2 * dim, dim, kernel=1))
        if dim % 2:
            raise ModetrShapeError(f"channel halving needs an even dim, got {dim}")
        return cls(
            ConvParams.init(rng, dim, dim // 2, kernel=1),
            ConvParams.init(rng, dim, dim // 2, kernel=1),
        )


def _check_pair(f1: Tensor, f2: Tensor):
    if f1.ndim != 2 or f1.shape != f2.shape:
        raise ModetrShapeError(f"fusion: stream shapes differ: {f1.shape} vs {f2.shape}")


def fuse_channel_halved(f1: Tensor, f2: Tensor, params: FusionParams) -> Tensor:
    """
    Halves each ``L×D`` stream to ``L×D/2`` with its own 1×1 convolution,
    then concatenates along channels, restoring ``L×D``.
    """
    _check_pair(f1, f2)
    if f1.shape[1] % 2:
        raise ModetrShapeError(f"fusion: channel halving needs an even dim, got {f1.shape[1]}")
    if params.second is None:
        raise ModetrShapeError("fusion: halving needs two per-stream convolutions")
    return ops.concat([conv1x1_tokens(params.first, f1), conv1x1_tokens(params.second, f2)], axis=1)


def fuse_concat_project(f1: Tensor, f2: Tensor, params: FusionParams) -> Tensor:
    """
    Concatenates the streams to ``L×2D`` then projects back to ``L×D`` with a 1×1 convolution.
    """
    _check_pair(f1, f2)
    return conv1x1_tokens(params.first, ops.concat([f1, f2], axis=1))


def fuse(f1: Tensor, f2: Tensor, params: FusionParams) -> Tensor:
    if params.mode == 'project':
        return fuse_concat_project(f1, f2, params)
    return fuse_channel_halved(f1, f2, params)
