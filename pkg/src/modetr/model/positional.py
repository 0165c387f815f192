"""
Spatial positional encoding over flattened feature-map tokens
and temporal positional encoding over frame indices.

The spatial code is 1-D over the flattened token index ``[0, H'·W')``,
not the 2-D row/column split used by other detection transformers.
The temporal code is a learned table with one row per frame in the window;
it is only ever added on the encoder side, never to the decoder positions.
"""
from __future__ import annotations

import functools
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np

from modetr.autograd import Tensor, ops
from modetr.exceptions import ModetrConfigError, ModetrContractError, ModetrShapeError
from modetr.nn import embedding_lookup, param

__all__ = ['SpeTable', 'TpeTable', 'spe_sinusoidal', 'apply_early_tpe', 'apply_late_tpe']


@dataclass(frozen=True)
class SpeTable:
    """
    Fixed sinusoidal ``L×D`` table; never trained and never serialized.
    """
    table: Tensor

    @property
    def num_tokens(self) -> int:
        return self.table.shape[0]


@dataclass
class TpeTable:
    """
    Learned ``N_frames×D`` table indexed by frame order within the window.
    """
    table: Tensor

    @property
    def num_frames(self) -> int:
        return self.table.shape[0]

    @classmethod
    def init(cls, num_frames: int, dim: int) -> TpeTable:
        """
        Zero-initialized so that training starts temporally neutral.
        """
        return cls(param(np.zeros((num_frames, dim))))

    def rows_for(self, frame: int, count: int) -> Tensor:
        """
        Repeats the row of one frame ``count`` times.
        """
        if not 0 <= frame < self.num_frames:
            raise ModetrContractError(
                f"frame index {frame} outside the temporal window of {self.num_frames}",
            )
        return embedding_lookup(self.table, [frame] * count)


@functools.lru_cache(maxsize=32)
def _sinusoid(num_tokens: int, dim: int) -> np.ndarray:
    pos = np.arange(num_tokens, dtype=np.float64)[:, None]
    freq = np.power(10000.0, np.arange(0, dim, 2, dtype=np.float64) / dim)
    table = np.empty((num_tokens, dim))
    table[:, 0::2] = np.sin(pos / freq)
    table[:, 1::2] = np.cos(pos / freq)
    table.setflags(write=False)
    return table


def spe_sinusoidal(num_tokens: int, dim: int) -> SpeTable:
    """
    Builds ``PE[pos, 2i] = sin(pos / 10000^(2i/D))``
    and ``PE[pos, 2i+1] = cos(pos / 10000^(2i/D))`` for ``pos`` in ``[0, L)``.
    """
    if dim % 2:
        raise ModetrConfigError(f"spatial encoding needs an even dim, got {dim}", field='d_model')
    if num_tokens < 1:
        raise ModetrConfigError(f"spatial encoding needs at least one token, got {num_tokens}")
    return SpeTable(Tensor(_sinusoid(num_tokens, dim)))


def _check_frames(frames: Sequence[Tensor], what: str):
    if not frames:
        raise ModetrContractError(f"{what}: no frames given")
    first = frames[0].shape
    for frame in frames[1:]:
        if frame.shape != first:
            raise ModetrShapeError(f"{what}: frame shape mismatch between {first} and {frame.shape}")


def apply_early_tpe(
        frame_tokens: Sequence[Tensor],
        spe: SpeTable,
        tpe: Optional[TpeTable],
) -> tuple[Tensor, Tensor]:
    """
    Concatenates the per-frame token sequences in time order
    and builds the matching position stream ``SPE + TPE[t]``
    (``SPE`` alone when the temporal table is disabled).
    Both streams feed one shared encoder.
    """
    _check_frames(frame_tokens, 'early TPE')
    num_tokens = frame_tokens[0].shape[0]
    if frame_tokens[0].shape != spe.table.shape:
        raise ModetrShapeError(
            f"early TPE: tokens {frame_tokens[0].shape} vs spatial table {spe.table.shape}",
        )
    if tpe is not None and len(frame_tokens) > tpe.num_frames:
        raise ModetrContractError(
            f"early TPE: {len(frame_tokens)} frames exceed the window of {tpe.num_frames}",
        )
    positions = []
    for frame in range(len(frame_tokens)):
        if tpe is None:
            positions.append(spe.table)
        else:
            positions.append(ops.add(spe.table, tpe.rows_for(frame, num_tokens)))
    return ops.concat(list(frame_tokens), axis=0), ops.concat(positions, axis=0)


def apply_late_tpe(encoded_frames: Sequence[Tensor], tpe: TpeTable) -> list[Tensor]:
    """
    Adds ``TPE[t]`` to every token of frame t after its own encoder ran.
    """
    _check_frames(encoded_frames, 'late TPE')
    num_tokens, dim = encoded_frames[0].shape
    if dim != tpe.table.shape[1]:
        raise ModetrShapeError(f"late TPE: frames {encoded_frames[0].shape} vs table {tpe.table.shape}")
    if len(encoded_frames) > tpe.num_frames:
        raise ModetrContractError(
            f"late TPE: {len(encoded_frames)} frames exceed the window of {tpe.num_frames}",
        )
    return [
        ops.add(frame, tpe.rows_for(index, num_tokens))
        for index, frame in enumerate(encoded_frames)
    ]
