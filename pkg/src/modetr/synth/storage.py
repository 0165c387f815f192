"""
On-disk dataset format: a ``manifest.json`` plus one binary tensor file
per frame and flow map.

Tensor files hold the magic bytes ``MDTB``, a u8 format version, a u8 rank,
the dims as little-endian u32, then the values as little-endian
32-bit reals in row-major order.
"""
from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from modetr.autograd import Tensor
from modetr.boxes import GroundTruthObject
from modetr.exceptions import ModetrContractError, ModetrDataError, ModetrFormatError
from modetr.fileloc import FileLoc
from modetr.synth.scene import SamplePair, SceneSpec

__all__ = [
    'TENSOR_MAGIC', 'TENSOR_VERSION', 'DATASET_FORMAT_VERSION', 'MANIFEST_NAME',
    'Dataset', 'encode_tensor', 'decode_tensor', 'write_tensor', 'read_tensor',
    'write_dataset', 'read_dataset', 'swap_into_place',
]

logger = logging.getLogger(__name__)

TENSOR_MAGIC = b'MDTB'
TENSOR_VERSION = 1
DATASET_FORMAT_VERSION = 1
MANIFEST_NAME = 'manifest.json'

PathLike = Union[str, os.PathLike]


@dataclass
class Dataset:
    """
    Samples loaded from a dataset directory together with the manifest metadata.
    """
    samples: list[SamplePair]

    #: Whether every sample carries an optical flow map
    has_flow: bool

    #: Scene spec the samples were drawn from (None if not recorded)
    spec: Optional[SceneSpec] = None

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, index: int) -> SamplePair:
        return self.samples[index]


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.ndim > 255:
        raise ModetrContractError(f"tensor rank {array.ndim} does not fit the format")
    header = TENSOR_MAGIC + bytes([TENSOR_VERSION, array.ndim])
    dims = np.asarray(array.shape, dtype='<u4').tobytes()
    payload = np.ascontiguousarray(array, dtype='<f4').tobytes()
    return header + dims + payload


def decode_tensor(blob: bytes, path: PathLike = '<bytes>') -> np.ndarray:
    """
    Decodes one tensor file into a float64 array.
    Every structural problem is reported with the byte offset where it was found.
    """
    if len(blob) < 6:
        raise ModetrFormatError(
            "truncated tensor header at %(pos)s", pos=FileLoc.of(path, len(blob)),
        )
    if blob[:4] != TENSOR_MAGIC:
        raise ModetrFormatError(
            f"bad magic {blob[:4]!r} at %(pos)s, expected {TENSOR_MAGIC!r}",
            pos=FileLoc.of(path, 0),
        )
    version, rank = blob[4], blob[5]
    if version != TENSOR_VERSION:
        raise ModetrFormatError(
            f"unsupported tensor version {version} at %(pos)s", pos=FileLoc.of(path, 4),
        )
    dims_end = 6 + 4 * rank
    if len(blob) < dims_end:
        raise ModetrFormatError(
            f"truncated shape header for rank {rank} at %(pos)s", pos=FileLoc.of(path, len(blob)),
        )
    shape = tuple(int(d) for d in np.frombuffer(blob, dtype='<u4', count=rank, offset=6))
    expected = dims_end + 4 * int(np.prod(shape, dtype=np.int64))
    if len(blob) != expected:
        offset = min(len(blob), expected)
        problem = 'truncated' if len(blob) < expected else 'trailing bytes in'
        raise ModetrFormatError(
            f"{problem} tensor payload of shape {shape} at %(pos)s "
            f"({len(blob)} bytes, expected {expected})",
            pos=FileLoc.of(path, offset),
        )
    data = np.frombuffer(blob, dtype='<f4', offset=dims_end).astype(np.float64)
    return data.reshape(shape)


def write_tensor(path: PathLike, array: np.ndarray):
    Path(path).write_bytes(encode_tensor(array))


def read_tensor(path: PathLike) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes(), path)


def _sample_files(index: int, with_flow: bool) -> dict[str, Optional[str]]:
    stem = f"sample_{index:05d}"
    return {
        'frame_t': f"{stem}_frame_t.mdtb",
        'frame_t1': f"{stem}_frame_t1.mdtb",
        'flow': f"{stem}_flow.mdtb" if with_flow else None,
    }


def _prepare_target(directory: Path):
    if directory.exists():
        if not directory.is_dir():
            raise ModetrDataError(f"dataset target {str(directory)!r} is not a directory")
        if any(directory.iterdir()) and not (directory / MANIFEST_NAME).exists():
            raise ModetrDataError(
                f"refusing to replace non-empty directory {str(directory)!r} "
                f"which holds no dataset",
            )


def swap_into_place(staging: Path, directory: Path):
    """
    Renames a fully written staging directory onto ``directory``,
    retiring whatever was there before.
    """
    if directory.exists():
        retired = Path(tempfile.mkdtemp(prefix=f".{directory.name}.old-", dir=directory.parent))
        os.replace(directory, retired / directory.name)
        os.replace(staging, directory)
        shutil.rmtree(retired, ignore_errors=True)
    else:
        os.replace(staging, directory)


def write_dataset(
        directory: PathLike,
        samples: Sequence[SamplePair],
        spec: Optional[SceneSpec] = None,
        has_flow: Optional[bool] = None,
):
    """
    Writes samples into a dataset directory.

    Files are staged in a sibling temporary directory which is renamed into place
    only once everything was written, so a partial dataset never looks complete.
    """
    directory = Path(directory)
    if has_flow is None:
        has_flow = bool(samples) and all(s.flow is not None for s in samples)
    if has_flow and any(s.flow is None for s in samples):
        raise ModetrContractError("cannot write a flow dataset from samples without flow")
    shapes = {s.frame_t.shape for s in samples}
    if len(shapes) > 1:
        raise ModetrContractError(f"samples have differing frame shapes {sorted(shapes)}")
    _prepare_target(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)

    staging = Path(tempfile.mkdtemp(prefix=f".{directory.name}.tmp-", dir=directory.parent))
    try:
        records = []
        for index, sample in enumerate(samples):
            files = _sample_files(index, has_flow)
            write_tensor(staging / files['frame_t'], sample.frame_t.data)
            write_tensor(staging / files['frame_t1'], sample.frame_t1.data)
            if has_flow:
                write_tensor(staging / files['flow'], sample.flow.data)
            records.append({
                'index': index,
                'files': files,
                'ego': list(sample.ego),
                'objects': [obj.to_record() for obj in sample.objects],
            })
        height, width = next(iter(shapes))[1:] if shapes else (
            (spec.height, spec.width) if spec is not None else (0, 0)
        )
        manifest = {
            'format_version': DATASET_FORMAT_VERSION,
            'spec': spec.to_dict() if spec is not None else None,
            'has_flow': has_flow,
            'height': height,
            'width': width,
            'samples': records,
        }
        (staging / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n')
        swap_into_place(staging, directory)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    logger.info("wrote %d samples to %s", len(samples), directory)


def _load_manifest(path: Path) -> dict:
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ModetrFormatError("missing manifest %(pos)s", pos=FileLoc.of(path, 0)) from None
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModetrFormatError(
            f"invalid manifest JSON ({exc.msg}) at %(pos)s",
            pos=FileLoc.of(path, len(text[:exc.pos].encode())),
        ) from None
    if not isinstance(manifest, dict):
        raise ModetrFormatError("manifest must be a JSON object at %(pos)s", pos=FileLoc.of(path, 0))
    if manifest.get('format_version') != DATASET_FORMAT_VERSION:
        raise ModetrFormatError(
            f"unsupported dataset format version {manifest.get('format_version')!r} in %(pos)s",
            pos=FileLoc.of(path, 0),
        )
    for key in ('has_flow', 'height', 'width', 'samples'):
        if key not in manifest:
            raise ModetrFormatError(f"manifest lacks {key!r} in %(pos)s", pos=FileLoc.of(path, 0))
    return manifest


def _read_checked(path: Path, expected_shape: tuple[int, ...]) -> Tensor:
    if not path.exists():
        raise ModetrFormatError("missing tensor file %(pos)s", pos=FileLoc.of(path, 0))
    array = read_tensor(path)
    if array.shape != expected_shape:
        raise ModetrFormatError(
            f"tensor of shape {array.shape} at %(pos)s, expected {expected_shape}",
            pos=FileLoc.of(path, 6),
        )
    return Tensor.wrap(array)


def read_dataset(directory: PathLike) -> Dataset:
    """
    Loads a dataset directory written by :func:`write_dataset`.
    """
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    manifest = _load_manifest(manifest_path)
    height, width = int(manifest['height']), int(manifest['width'])
    has_flow = bool(manifest['has_flow'])
    spec = SceneSpec.from_dict(manifest['spec']) if manifest.get('spec') is not None else None

    samples = []
    for record in manifest['samples']:
        try:
            files = record['files']
            objects = [GroundTruthObject.from_record(obj) for obj in record['objects']]
            ego = tuple(int(v) for v in record.get('ego', (0, 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModetrFormatError(
                f"malformed sample record {record!r} in %(pos)s ({exc})",
                pos=FileLoc.of(manifest_path, 0),
            ) from None
        flow = None
        if has_flow:
            if not files.get('flow'):
                raise ModetrFormatError(
                    f"sample {record.get('index')} lacks a flow file in %(pos)s",
                    pos=FileLoc.of(manifest_path, 0),
                )
            flow = _read_checked(directory / files['flow'], (2, height, width))
        samples.append(SamplePair(
            frame_t=_read_checked(directory / files['frame_t'], (3, height, width)),
            frame_t1=_read_checked(directory / files['frame_t1'], (3, height, width)),
            flow=flow,
            objects=objects,
            ego=ego,
        ))
    logger.info("read %d samples from %s", len(samples), directory)
    return Dataset(samples=samples, has_flow=has_flow, spec=spec)
