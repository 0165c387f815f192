"""
Data definitions for trainable parameter containers.

Every container is a dataclass whose fields are tensors,
nested containers, lists of containers, or plain integers (hyperparameters).
:func:`named_parameters` walks such a structure in field order,
which gives every trainable tensor a stable dotted name.
"""
from __future__ import annotations

import dataclasses
from collections.abc import Iterator
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from modetr.autograd import Tensor
from modetr.exceptions import ModetrShapeError

__all__ = [
    'LinearParams', 'LayerNormParams', 'ConvParams', 'AttentionParams',
    'EncoderLayerParams', 'DecoderLayerParams',
    'param', 'embedding_table', 'named_parameters', 'count_parameters',
]


def param(array: np.ndarray) -> Tensor:
    """
    Creates a leaf tensor that requires gradients.
    """
    return Tensor(array, requires_grad=True)


def embedding_table(rng: np.random.Generator, rows: int, dim: int) -> Tensor:
    """
    Creates an embedding table initialized from a normal distribution with σ = 0.02.
    """
    return param(rng.normal(0.0, 0.02, size=(rows, dim)))


@dataclass
class LinearParams:
    """
    Affine map ``x·Wᵀ + b``.
    """
    #: Weight matrix of shape ``D_out×D_in``
    weight: Tensor

    #: Bias vector of shape ``D_out``
    bias: Tensor

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ModetrShapeError(
                f"inconsistent linear parameters {self.weight.shape} and {self.bias.shape}",
            )

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_out: int) -> LinearParams:
        """
        Weights uniform in ``[-s, s]`` with ``s = sqrt(1/D_in)``, biases zero.
        """
        bound = np.sqrt(1.0 / d_in)
        return cls(
            weight=param(rng.uniform(-bound, bound, size=(d_out, d_in))),
            bias=param(np.zeros(d_out)),
        )


@dataclass
class LayerNormParams:
    """
    Elementwise affine parameters of a layer normalization.
    """
    #: Scale vector
    gamma: Tensor

    #: Shift vector
    beta: Tensor

    @classmethod
    def init(cls, dim: int) -> LayerNormParams:
        return cls(gamma=param(np.ones(dim)), beta=param(np.zeros(dim)))


@dataclass
class ConvParams:
    """
    2-D convolution with square kernel 1 or 3.
    Padding is implied by the kernel size (1 for 3×3, 0 for 1×1).
    """
    #: Weight of shape ``C_out×C_in×k×k``
    weight: Tensor

    #: Bias vector of shape ``C_out``
    bias: Tensor

    #: Spatial stride (1 or 2)
    stride: int = 1

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    @property
    def c_in(self) -> int:
        return self.weight.shape[1]

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(
            cls, rng: np.random.Generator,
            c_in: int, c_out: int, kernel: int, stride: int = 1,
    ) -> ConvParams:
        bound = np.sqrt(1.0 / (c_in * kernel * kernel))
        return cls(
            weight=param(rng.uniform(-bound, bound, size=(c_out, c_in, kernel, kernel))),
            bias=param(np.zeros(c_out)),
            stride=stride,
        )


@dataclass
class AttentionParams:
    """
    Multi-head attention projections.
    Head ``i`` uses columns ``[i·d_h, (i+1)·d_h)`` of each projection output.
    """
    q_proj: LinearParams
    k_proj: LinearParams
    v_proj: LinearParams
    out_proj: LinearParams

    #: Number of heads h; must divide the model dim
    num_heads: int

    def __post_init__(self):
        if self.dim % self.num_heads != 0:
            raise ModetrShapeError(
                f"number of heads {self.num_heads} does not divide model dim {self.dim}",
            )

    @property
    def dim(self) -> int:
        return self.q_proj.d_out

    @property
    def head_dim(self) -> int:
        return self.dim // self.num_heads

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int, num_heads: int) -> AttentionParams:
        return cls(
            q_proj=LinearParams.init(rng, dim, dim),
            k_proj=LinearParams.init(rng, dim, dim),
            v_proj=LinearParams.init(rng, dim, dim),
            out_proj=LinearParams.init(rng, dim, dim),
            num_heads=num_heads,
        )


@dataclass
class EncoderLayerParams:
    """
    Post-norm transformer encoder layer.
    """
    self_attn: AttentionParams
    ff1: LinearParams
    ff2: LinearParams
    norm1: LayerNormParams
    norm2: LayerNormParams

    @classmethod
    def init(
            cls, rng: np.random.Generator,
            dim: int, num_heads: int, ff_dim: int,
    ) -> EncoderLayerParams:
        return cls(
            self_attn=AttentionParams.init(rng, dim, num_heads),
            ff1=LinearParams.init(rng, dim, ff_dim),
            ff2=LinearParams.init(rng, ff_dim, dim),
            norm1=LayerNormParams.init(dim),
            norm2=LayerNormParams.init(dim),
        )


@dataclass
class DecoderLayerParams:
    """
    Post-norm transformer decoder layer (self-attention, cross-attention, feed-forward).
    """
    self_attn: AttentionParams
    cross_attn: AttentionParams
    ff1: LinearParams
    ff2: LinearParams
    norm1: LayerNormParams
    norm2: LayerNormParams
    norm3: LayerNormParams

    @classmethod
    def init(
            cls, rng: np.random.Generator,
            dim: int, num_heads: int, ff_dim: int,
    ) -> DecoderLayerParams:
        return cls(
            self_attn=AttentionParams.init(rng, dim, num_heads),
            cross_attn=AttentionParams.init(rng, dim, num_heads),
            ff1=LinearParams.init(rng, dim, ff_dim),
            ff2=LinearParams.init(rng, ff_dim, dim),
            norm1=LayerNormParams.init(dim),
            norm2=LayerNormParams.init(dim),
            norm3=LayerNormParams.init(dim),
        )


def named_parameters(obj: Any, prefix: str = '') -> Iterator[tuple[str, Tensor]]:
    """
    Generates ``(dotted name, tensor)`` pairs for every tensor inside
    a parameter structure, in declaration order.  ``None`` fields are skipped.
    """
    if obj is None:
        return
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for fld in dataclasses.fields(obj):
            yield from named_parameters(getattr(obj, fld.name), _join(prefix, fld.name))
    elif isinstance(obj, (list, tuple)):
        for index, item in enumerate(obj):
            yield from named_parameters(item, _join(prefix, str(index)))


def count_parameters(obj: Any) -> int:
    """
    Total scalar count across every trainable tensor of a parameter structure.
    """
    return sum(tensor.size for _, tensor in named_parameters(obj))


def _join(prefix: Optional[str], name: str) -> str:
    return f"{prefix}.{name}" if prefix else name
