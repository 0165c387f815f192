"""
Adam with global gradient-norm clipping.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from typing import Optional

import numpy as np

from modetr.autograd import Tensor
from modetr.exceptions import ModetrContractError

__all__ = ['Adam']


class Adam:
    """
    Adam optimizer over named parameter tensors.
    Gradients are first rescaled so that their global L2 norm
    does not exceed ``grad_clip`` (unless it is 0).
    """

    def __init__(
            self,
            named_params: Sequence[tuple[str, Tensor]],
            lr: float = 1e-3,
            betas: tuple[float, float] = (0.9, 0.999),
            eps: float = 1e-8,
            grad_clip: float = 1.0,
    ):
        self.named_params = list(named_params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.grad_clip = grad_clip
        #: Steps taken so far
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named_params}

    def zero_grad(self):
        for _, tensor in self.named_params:
            tensor.zero_grad()

    def grad_norm(self) -> float:
        return math.sqrt(sum(
            float(np.sum(p.grad * p.grad)) for _, p in self.named_params if p.grad is not None
        ))

    def step(self) -> float:
        """
        Applies one update and returns the gradient norm measured before clipping.
        Parameters without a gradient are treated as having a zero gradient.
        """
        norm = self.grad_norm()
        clip_scale = 1.0
        if self.grad_clip > 0 and norm > self.grad_clip:
            clip_scale = self.grad_clip / norm
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for name, tensor in self.named_params:
            grad = np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad * clip_scale
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            tensor.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
        return norm

    def state_arrays(self) -> dict[str, np.ndarray]:
        """
        Moment estimates keyed ``m.<param>`` and ``v.<param>``.
        """
        arrays = {f"m.{name}": value for name, value in self.m.items()}
        arrays.update({f"v.{name}": value for name, value in self.v.items()})
        return arrays

    def load_state(self, t: int, arrays: Optional[dict[str, np.ndarray]]):
        self.t = int(t)
        if not arrays:
            return
        for name, tensor in self.named_params:
            for slot, store in (('m', self.m), ('v', self.v)):
                value = arrays.get(f"{slot}.{name}")
                if value is None:
                    raise ModetrContractError(f"optimizer state lacks {slot}.{name}")
                if value.shape != tensor.shape:
                    raise ModetrContractError(
                        f"optimizer state {slot}.{name} has shape {value.shape}, "
                        f"expected {tensor.shape}",
                    )
                store[name] = np.array(value, dtype=np.float64)
