"""
Finite-difference oracle for verifying backward rules.
"""
from __future__ import annotations

from collections.abc import Callable

import numpy as np

from modetr.autograd.tensor import Tensor, no_grad
from modetr.exceptions import ModetrContractError

__all__ = ['finite_difference_grad', 'relative_error']


def finite_difference_grad(
        f: Callable[[Tensor], Tensor],
        x: Tensor,
        eps: float = 1e-6,
) -> Tensor:
    """
    Estimates d f / d x with central differences
    ``(f(x + eps·e_i) - f(x - eps·e_i)) / (2·eps)`` for every element i.
    The input tensor itself is never modified.
    """
    if eps <= 0:
        raise ModetrContractError(f"finite difference step must be positive, got {eps}")
    base = x.numpy()
    flat = base.reshape(-1)
    grad = np.zeros(flat.shape)
    with no_grad():
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            upper = f(Tensor(base)).item()
            flat[i] = saved - eps
            lower = f(Tensor(base)).item()
            flat[i] = saved
            grad[i] = (upper - lower) / (2.0 * eps)
    return Tensor(grad.reshape(x.shape))


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """
    Largest elementwise ``|analytic - numeric| / max(1, |analytic|)``.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))
