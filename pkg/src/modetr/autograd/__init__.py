"""
This modetr subpackage implements the dense tensor type
with reverse-mode automatic differentiation on which every model computation runs.
"""
from __future__ import annotations

from modetr.autograd import ops
from modetr.autograd.gradcheck import finite_difference_grad, relative_error
from modetr.autograd.tensor import Tape, TapeEntry, Tensor, backward, is_grad_enabled, no_grad

__all__ = [
    'Tensor', 'Tape', 'TapeEntry',
    'backward', 'no_grad', 'is_grad_enabled',
    'finite_difference_grad', 'relative_error',
    'ops',
]
