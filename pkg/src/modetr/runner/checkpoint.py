"""
Checkpoint file format.

A checkpoint starts with the magic bytes ``MODETR1`` followed by the header
length as a little-endian u64, then a JSON header (configuration, training step,
rng state and a table of tensor names, shapes and payload offsets),
then every tensor as little-endian 64-bit reals in row-major order.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from modetr.exceptions import ModetrFormatError
from modetr.fileloc import FileLoc
from modetr.model import ModetrParams, init_params
from modetr.nn import named_parameters
from modetr.runner.config import RunConfig

__all__ = ['CHECKPOINT_MAGIC', 'CHECKPOINT_VERSION', 'Checkpoint', 'save_checkpoint', 'load_checkpoint']

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b'MODETR1'
CHECKPOINT_VERSION = 1

PathLike = Union[str, os.PathLike]

_PREAMBLE = len(CHECKPOINT_MAGIC) + 8


@dataclass
class Checkpoint:
    """
    Snapshot of a training run.
    """
    config: RunConfig
    params: ModetrParams

    #: Optimizer steps taken so far
    step: int = 0

    #: State of the batch-sampling generator (``bit_generator.state``)
    rng_state: Optional[dict] = None

    #: Adam step counter
    optimizer_t: int = 0

    #: Adam moment estimates keyed ``m.<param>`` / ``v.<param>``
    optimizer_arrays: dict[str, np.ndarray] = field(default_factory=dict)


def _tensor_table(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    table = [(f"param.{name}", tensor.data) for name, tensor in named_parameters(ckpt.params)]
    table += [(f"adam.{name}", array) for name, array in sorted(ckpt.optimizer_arrays.items())]
    return table


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, array in _tensor_table(ckpt):
        payload = np.ascontiguousarray(array, dtype='<f8').tobytes()
        entries.append({'name': name, 'shape': list(array.shape), 'offset': offset, 'nbytes': len(payload)})
        chunks.append(payload)
        offset += len(payload)
    header = {
        'format_version': CHECKPOINT_VERSION,
        'config': ckpt.config.to_dict(),
        'step': ckpt.step,
        'rng_state': ckpt.rng_state,
        'optimizer_t': ckpt.optimizer_t,
        'tensors': entries,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    length = np.array([len(header_bytes)], dtype='<u8').tobytes()
    return CHECKPOINT_MAGIC + length + header_bytes + b''.join(chunks)


def save_checkpoint(path: PathLike, ckpt: Checkpoint):
    """
    Writes the checkpoint through a temporary sibling file renamed into place.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(ckpt)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix='.tmp', dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as stream:
            stream.write(blob)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.info("saved checkpoint at step %d to %s", ckpt.step, path)


def _parse_header(blob: bytes, path: PathLike) -> tuple[dict, int]:
    if len(blob) < _PREAMBLE:
        raise ModetrFormatError("truncated checkpoint preamble at %(pos)s", pos=FileLoc.of(path, len(blob)))
    if blob[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ModetrFormatError(
            f"bad magic {blob[:len(CHECKPOINT_MAGIC)]!r} at %(pos)s, expected {CHECKPOINT_MAGIC!r}",
            pos=FileLoc.of(path, 0),
        )
    length = int(np.frombuffer(blob, dtype='<u8', count=1, offset=len(CHECKPOINT_MAGIC))[0])
    end = _PREAMBLE + length
    if len(blob) < end:
        raise ModetrFormatError(
            f"truncated checkpoint header of {length} bytes at %(pos)s",
            pos=FileLoc.of(path, len(blob)),
        )
    try:
        header = json.loads(blob[_PREAMBLE:end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModetrFormatError(
            f"invalid checkpoint header ({exc}) at %(pos)s", pos=FileLoc.of(path, _PREAMBLE),
        ) from None
    if not isinstance(header, dict) or header.get('format_version') != CHECKPOINT_VERSION:
        raise ModetrFormatError(
            "unsupported checkpoint header at %(pos)s", pos=FileLoc.of(path, _PREAMBLE),
        )
    return header, end


def decode_checkpoint(blob: bytes, path: PathLike = '<bytes>') -> Checkpoint:
    header, payload_start = _parse_header(blob, path)
    config = RunConfig.from_dict(header['config'])
    params = init_params(config.model, seed=config.seed)
    expected = {f"param.{name}": tensor for name, tensor in named_parameters(params)}

    arrays: dict[str, np.ndarray] = {}
    for entry in header.get('tensors', []):
        name, shape = entry['name'], tuple(entry['shape'])
        start = payload_start + int(entry['offset'])
        stop = start + int(entry['nbytes'])
        if int(entry['nbytes']) != 8 * int(np.prod(shape, dtype=np.int64)):
            raise ModetrFormatError(
                f"tensor {name!r} size disagrees with its shape {shape} at %(pos)s",
                pos=FileLoc.of(path, start),
            )
        if stop > len(blob):
            raise ModetrFormatError(
                f"truncated payload of tensor {name!r} at %(pos)s", pos=FileLoc.of(path, len(blob)),
            )
        arrays[name] = np.frombuffer(blob[start:stop], dtype='<f8').astype(np.float64).reshape(shape)

    for name, tensor in expected.items():
        if name not in arrays:
            raise ModetrFormatError(
                f"checkpoint lacks tensor {name!r} (header at %(pos)s)", pos=FileLoc.of(path, _PREAMBLE),
            )
        if arrays[name].shape != tensor.shape:
            raise ModetrFormatError(
                f"tensor {name!r} has shape {arrays[name].shape}, expected {tensor.shape} "
                f"(header at %(pos)s)",
                pos=FileLoc.of(path, _PREAMBLE),
            )
        tensor.data = arrays[name].copy()

    return Checkpoint(
        config=config,
        params=params,
        step=int(header.get('step', 0)),
        rng_state=header.get('rng_state'),
        optimizer_t=int(header.get('optimizer_t', 0)),
        optimizer_arrays={
            name[len('adam.'):]: array for name, array in arrays.items() if name.startswith('adam.')
        },
    )


def load_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise ModetrFormatError("missing checkpoint %(pos)s", pos=FileLoc.of(path, 0)) from None
    ckpt = decode_checkpoint(blob, path)
    logger.info("loaded checkpoint at step %d from %s", ckpt.step, path)
    return ckpt
