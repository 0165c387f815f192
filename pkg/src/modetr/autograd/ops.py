"""
Differentiable operations over :class:`Tensor`.

Binary elementwise operations accept operands of equal shape,
or one operand holding a single element (scalar-tensor broadcast).
No other broadcasting is performed; :func:`add_bias` covers
the row-vector case explicitly.
"""
from __future__ import annotations

from collections.abc import Sequence
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from modetr.autograd.tensor import BackwardRule, Tensor, TapeEntry, is_grad_enabled
from modetr.exceptions import ModetrContractError, ModetrShapeError

__all__ = [
    'Operand', 'as_tensor',
    'add', 'sub', 'mul', 'div', 'maximum', 'minimum', 'add_bias',
    'neg', 'scale', 'relu', 'sigmoid', 'absolute', 'sqrt',
    'matmul', 'transpose', 'reshape', 'concat', 'slice_along', 'gather_rows',
    'sum', 'mean', 'softmax', 'log_softmax', 'layer_norm', 'conv2d',
]

Operand = Union[Tensor, float, int]


def as_tensor(value: Operand) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _record(op: str, data: np.ndarray, inputs: Sequence[Tensor], rule: BackwardRule) -> Tensor:
    """
    Wraps the forward result and records a tape entry
    whenever some input requires gradients.
    """
    out = Tensor.wrap(data)
    if is_grad_enabled() and any(inp.requires_grad for inp in inputs):
        out.requires_grad = True
        out.entry = TapeEntry(op, tuple(inputs), rule)
    return out


def _binary_operands(name: str, a: Tensor, b: Tensor) -> tuple[np.ndarray, np.ndarray]:
    if a.shape == b.shape:
        return a.data, b.data
    if b.size == 1:
        return a.data, b.data.reshape(())
    if a.size == 1:
        return a.data.reshape(()), b.data
    raise ModetrShapeError(f"{name}: shape mismatch between {a.shape} and {b.shape}")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.sum(grad).reshape(shape)


#######################
# Elementwise binary  #
#######################

def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = _binary_operands('add', a, b)

    def rule(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _record('add', ad + bd, (a, b), rule)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = _binary_operands('sub', a, b)

    def rule(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _record('sub', ad - bd, (a, b), rule)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = _binary_operands('mul', a, b)

    def rule(g):
        return _reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)

    return _record('mul', ad * bd, (a, b), rule)


def div(a: Operand, b: Operand) -> Tensor:
    """
    Elementwise quotient; the divisor must be nonzero everywhere.
    """
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = _binary_operands('div', a, b)
    if np.any(bd == 0):
        raise ModetrContractError("div: division by zero")
    out = ad / bd

    def rule(g):
        return _reduce_to(g / bd, a.shape), _reduce_to(-g * out / bd, b.shape)

    return _record('div', out, (a, b), rule)


def maximum(a: Operand, b: Operand) -> Tensor:
    """
    Elementwise maximum; ties send the gradient to the first operand.
    """
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = _binary_operands('maximum', a, b)
    pick_a = ad >= bd

    def rule(g):
        return _reduce_to(np.where(pick_a, g, 0.0), a.shape), \
            _reduce_to(np.where(pick_a, 0.0, g), b.shape)

    return _record('maximum', np.where(pick_a, ad, bd), (a, b), rule)


def minimum(a: Operand, b: Operand) -> Tensor:
    """
    Elementwise minimum; ties send the gradient to the first operand.
    """
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = _binary_operands('minimum', a, b)
    pick_a = ad <= bd

    def rule(g):
        return _reduce_to(np.where(pick_a, g, 0.0), a.shape), \
            _reduce_to(np.where(pick_a, 0.0, g), b.shape)

    return _record('minimum', np.where(pick_a, ad, bd), (a, b), rule)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """
    Adds a vector along the last axis of x (one copy per row).
    """
    if bias.ndim != 1 or x.ndim < 1 or x.shape[-1] != bias.shape[0]:
        raise ModetrShapeError(f"add_bias: shape mismatch between {x.shape} and {bias.shape}")
    lead_axes = tuple(range(x.ndim - 1))

    def rule(g):
        return g, g.sum(axis=lead_axes)

    return _record('add_bias', x.data + bias.data, (x, bias), rule)


######################
# Elementwise unary  #
######################

def neg(x: Tensor) -> Tensor:
    return _record('neg', -x.data, (x,), lambda g: (-g,))


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _record('scale', x.data * factor, (x,), lambda g: (g * factor,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record('relu', np.where(mask, x.data, 0.0), (x,), lambda g: (np.where(mask, g, 0.0),))


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _record('sigmoid', out, (x,), lambda g: (g * out * (1.0 - out),))


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _record('abs', np.abs(x.data), (x,), lambda g: (g * sign,))


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise ModetrContractError("sqrt: input must be strictly positive")
    out = np.sqrt(x.data)
    return _record('sqrt', out, (x,), lambda g: (g * 0.5 / out,))


###################
# Linear algebra  #
###################

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of a 2-D ``M×K`` and a 2-D ``K×N`` tensor.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ModetrShapeError(f"matmul: dimension mismatch between {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def rule(g):
        return g @ bd.T, ad.T @ g

    return _record('matmul', ad @ bd, (a, b), rule)


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = np.ascontiguousarray(np.transpose(x.data, axes))
    return _record('transpose', out, (x,), lambda g: (np.transpose(g, inverse),))


###################
# Shape handling  #
###################

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ModetrShapeError(f"reshape: cannot reshape {x.shape} into {shape}")
    return _record('reshape', x.data.reshape(shape).copy(), (x,), lambda g: (g.reshape(x.shape),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ModetrContractError("concat: no tensors given")
    ndim = tensors[0].ndim
    axis = _normalize_axis('concat', axis, ndim)
    for t in tensors[1:]:
        other_dims = [d for i, d in enumerate(t.shape) if i != axis]
        first_dims = [d for i, d in enumerate(tensors[0].shape) if i != axis]
        if t.ndim != ndim or other_dims != first_dims:
            raise ModetrShapeError(
                f"concat: shape mismatch between {tensors[0].shape} and {t.shape} "
                f"along axis {axis}",
            )
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record('concat', np.concatenate([t.data for t in tensors], axis=axis), tensors, rule)


def slice_along(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """
    Copies the half-open range ``[start, stop)`` along one axis.
    """
    axis = _normalize_axis('slice_along', axis, x.ndim)
    if not 0 <= start <= stop <= x.shape[axis]:
        raise ModetrShapeError(
            f"slice_along: range [{start}, {stop}) out of bounds for axis {axis} of {x.shape}",
        )
    key = tuple(slice(start, stop) if i == axis else slice(None) for i in range(x.ndim))

    def rule(g):
        full = np.zeros(x.shape)
        full[key] = g
        return (full,)

    return _record('slice', x.data[key].copy(), (x,), rule)


def gather_rows(table: Tensor, indices: Sequence[int]) -> Tensor:
    """
    Gathers rows of a 2-D table; repeated indices accumulate
    their gradients into the same row.
    """
    if table.ndim != 2:
        raise ModetrShapeError(f"gather_rows: expected a 2-D table, got {table.shape}")
    idx = np.asarray(list(indices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ModetrContractError(
            f"gather_rows: index out of range for table of {table.shape[0]} rows",
        )

    def rule(g):
        full = np.zeros(table.shape)
        np.add.at(full, idx, g)
        return (full,)

    out = table.data[idx].reshape(len(idx), table.shape[1])
    return _record('gather_rows', out, (table,), rule)


###############
# Reductions  #
###############

def sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    if axis is not None:
        axis = _normalize_axis('sum', axis, x.ndim)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record('sum', out, (x,), rule)


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[_normalize_axis('mean', axis, x.ndim)]
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


##################
# Normalization  #
##################

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """
    Softmax along one axis, computed with max-subtraction.
    """
    axis = _normalize_axis('softmax', axis, x.ndim)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    exps = np.exp(shifted)
    out = exps / np.sum(exps, axis=axis, keepdims=True)

    def rule(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _record('softmax', out, (x,), rule)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axis('log_softmax', axis, x.ndim)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - log_norm
    probs = np.exp(out)

    def rule(g):
        return (g - probs * np.sum(g, axis=axis, keepdims=True),)

    return _record('log_softmax', out, (x,), rule)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Normalizes over the last axis, then applies the elementwise affine map.
    """
    dim = x.shape[-1]
    if gamma.shape != (dim,) or beta.shape != (dim,):
        raise ModetrShapeError(
            f"layer_norm: parameter shapes {gamma.shape}/{beta.shape} do not match {x.shape}",
        )
    mu = np.mean(x.data, axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt(np.mean(centered ** 2, axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    lead_axes = tuple(range(x.ndim - 1))

    def rule(g):
        dxhat = g * gamma.data
        dx = inv_std / dim * (
            dim * dxhat
            - np.sum(dxhat, axis=-1, keepdims=True)
            - xhat * np.sum(dxhat * xhat, axis=-1, keepdims=True)
        )
        return dx, np.sum(g * xhat, axis=lead_axes), np.sum(g, axis=lead_axes)

    return _record('layer_norm', xhat * gamma.data + beta.data, (x, gamma, beta), rule)


#################
# Convolution   #
#################

def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """
    Cross-correlation of a ``C_in×H×W`` input with ``C_out×C_in×k×k`` weights,
    zero padding on both spatial sides.
    """
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ModetrShapeError(f"conv2d: invalid shapes {x.shape} and {weight.shape}")
    if weight.shape[1] != x.shape[0]:
        raise ModetrShapeError(
            f"conv2d: channel mismatch between input {x.shape} and weight {weight.shape}",
        )
    if bias.shape != (weight.shape[0],):
        raise ModetrShapeError(f"conv2d: bias {bias.shape} does not match weight {weight.shape}")
    kernel = weight.shape[2]
    padded = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (kernel, kernel), axis=(1, 2))[:, ::stride, ::stride]
    out_h, out_w = windows.shape[1], windows.shape[2]
    out = np.tensordot(weight.data, windows, axes=([1, 2, 3], [0, 3, 4]))
    out += bias.data[:, None, None]

    def rule(g):
        d_weight = np.tensordot(g, windows, axes=([1, 2], [1, 2]))
        d_windows = np.tensordot(weight.data, g, axes=([0], [0]))
        d_padded = np.zeros(padded.shape)
        for i in range(kernel):
            for j in range(kernel):
                d_padded[:, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += \
                    d_windows[:, i, j]
        d_x = d_padded[:, padding:padding + x.shape[1], padding:padding + x.shape[2]]
        return d_x, d_weight, g.sum(axis=(1, 2))

    return _record('conv2d', out, (x, weight, bias), rule)


def _normalize_axis(name: str, axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ModetrShapeError(f"{name}: axis {axis} out of range for rank {ndim}")
    return axis % ndim
