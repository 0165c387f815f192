"""
Dense float64 tensor with reverse-mode automatic differentiation.

Each operation applied to tensors that require gradients records a
:class:`TapeEntry` on its output.  Calling :func:`backward` on a scalar loss
collects those entries into a :class:`Tape` in topological order
and replays their backward rules in reverse.
"""
from __future__ import annotations

import contextlib
import contextvars
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from modetr.exceptions import ModetrContractError

__all__ = ['Tensor', 'TapeEntry', 'Tape', 'backward', 'no_grad', 'is_grad_enabled']

ArrayLike = Union[np.ndarray, float, int, Sequence]

#: Backward rule: maps the gradient of the output
#: to one gradient (or None) per input
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_GRAD_ENABLED: contextvars.ContextVar[bool] = contextvars.ContextVar(
    'modetr_grad_enabled', default=True,
)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """
    Disables tape recording within the current context.
    Forward results are unchanged; no backward rules are kept.
    """
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


class Tensor:
    """
    Dense n-dimensional array of 64-bit reals in row-major order
    with an optional gradient slot.
    """
    #: Underlying float64 array (never shared with caller-owned arrays)
    data: np.ndarray

    #: Whether gradients should flow into this tensor
    requires_grad: bool

    #: Accumulated gradient with the same shape as data, or None
    grad: Optional[np.ndarray]

    #: The recorded operation which produced this tensor (None for leaves)
    entry: Optional[TapeEntry]

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.entry = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self.entry is None

    @classmethod
    def wrap(cls, array: np.ndarray) -> Tensor:
        """
        Wraps a freshly computed float64 array without copying it.
        """
        tensor = cls.__new__(cls)
        tensor.data = np.asarray(array, dtype=np.float64)
        tensor.requires_grad = False
        tensor.grad = None
        tensor.entry = None
        return tensor

    def item(self) -> float:
        if self.size != 1:
            raise ModetrContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """
        Returns a copy of the data array.
        """
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64).reshape(self.shape)
        else:
            self.grad = self.grad + grad

    # Operator sugar; every method dispatches to modetr.autograd.ops

    def __add__(self, other):
        from modetr.autograd import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from modetr.autograd import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from modetr.autograd import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from modetr.autograd import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from modetr.autograd import ops
        return ops.div(self, other)

    def __neg__(self):
        from modetr.autograd import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from modetr.autograd import ops
        return ops.matmul(self, other)

    @property
    def T(self) -> Tensor:
        from modetr.autograd import ops
        return ops.transpose(self)


@dataclass(eq=False)
class TapeEntry:
    """
    A single recorded operation.
    """
    #: Short operation name, useful for debugging
    op: str

    #: Input tensors in argument order
    inputs: tuple[Tensor, ...]

    #: Rule that maps the output gradient to input gradients
    rule: BackwardRule


@dataclass
class Tape:
    """
    Ordered list of the tensors produced by recorded operations,
    in topological order (every operation's inputs precede it).
    """
    #: Non-leaf tensors in topological order
    outputs: list[Tensor] = field(default_factory=list)

    @classmethod
    def collect(cls, root: Tensor) -> Tape:
        """
        Collects every recorded operation reachable from the root tensor.
        """
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited or tensor.entry is None:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            for inp in tensor.entry.inputs:
                if inp.entry is not None and id(inp) not in visited:
                    stack.append((inp, False))
        return cls(order)

    @property
    def entries(self) -> list[TapeEntry]:
        return [tensor.entry for tensor in self.outputs]

    def __len__(self):
        return len(self.outputs)

    def replay(self, root: Tensor, seed_grad: np.ndarray):
        """
        Replays backward rules in reverse topological order,
        accumulating gradients into every leaf which requires them.
        """
        grads: dict[int, np.ndarray] = {id(root): seed_grad}
        for tensor in reversed(self.outputs):
            out_grad = grads.pop(id(tensor), None)
            if out_grad is None:
                continue
            entry = tensor.entry
            in_grads = entry.rule(out_grad)
            for inp, grad in zip(entry.inputs, in_grads):
                if grad is None or not inp.requires_grad:
                    continue
                if inp.entry is None:
                    inp.accumulate_grad(grad)
                elif id(inp) in grads:
                    grads[id(inp)] = grads[id(inp)] + grad
                else:
                    grads[id(inp)] = grad


def backward(loss: Tensor) -> Tape:
    """
    Populates ``grad`` on every leaf reachable from the scalar loss
    that requires gradients, and returns the replayed tape.
    """
    if loss.size != 1:
        raise ModetrContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss.entry is None:
        raise ModetrContractError("backward() called on a tensor with an empty tape")
    tape = Tape.collect(loss)
    tape.replay(loss, np.ones(loss.shape, dtype=np.float64))
    return tape
