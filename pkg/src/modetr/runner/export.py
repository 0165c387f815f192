"""
Export of decoder cross-attention maps as grayscale PGM images
next to the RGB input frames as PPM images.
"""
from __future__ import annotations

import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from modetr.exceptions import ModetrContractError, ModetrDataError
from modetr.model import ModelConfig, ModetrParams, Variant
from modetr.runner.evaluate import predict_sample
from modetr.synth import SamplePair
from modetr.synth.storage import swap_into_place

__all__ = ['attention_maps', 'normalize_map', 'write_pgm', 'write_ppm', 'export_attention']

logger = logging.getLogger(__name__)

#: Suffixes of the files an export writes
EXPORT_SUFFIXES = ('.pgm', '.ppm')


def normalize_map(values: np.ndarray) -> np.ndarray:
    """
    Min-max scales a map to 8-bit gray; a flat map becomes all zeros.
    """
    low, high = float(values.min()), float(values.max())
    if high <= low:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = (values - low) / (high - low) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def write_pgm(path: Union[str, os.PathLike], gray: np.ndarray):
    """
    Writes binary PGM (P5, maxval 255).
    """
    Image.fromarray(np.ascontiguousarray(gray, dtype=np.uint8)).save(path, format='PPM')


def write_ppm(path: Union[str, os.PathLike], frame: np.ndarray):
    """
    Writes a ``3×H×W`` frame with values in [0, 1] as binary PPM (P6, maxval 255).
    """
    rgb = np.clip(np.rint(np.moveaxis(frame, 0, -1) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(np.ascontiguousarray(rgb)).save(path, format='PPM')


def attention_maps(
        cross_attention: np.ndarray,
        memory_blocks: int,
        feature_size: tuple[int, int],
) -> np.ndarray:
    """
    Averages ``n_dec×h×N_q×L_mem`` attention over heads and folds every
    memory block back into its feature map: ``n_dec×N_q×blocks×H'×W'``.
    """
    n_dec, _, n_q, mem_len = cross_attention.shape
    feat_h, feat_w = feature_size
    if mem_len != memory_blocks * feat_h * feat_w:
        raise ModetrContractError(
            f"memory of length {mem_len} does not split into {memory_blocks} maps of {feat_h}×{feat_w}",
        )
    averaged = cross_attention.mean(axis=1)
    return averaged.reshape(n_dec, n_q, memory_blocks, feat_h, feat_w)


def _input_frames(model: ModelConfig, sample: SamplePair) -> dict[str, np.ndarray]:
    if model.variant in (Variant.BASELINE, Variant.RGB_OF):
        return {'frame_t1': sample.frame_t1.data}
    return {'frame_t': sample.frame_t.data, 'frame_t1': sample.frame_t1.data}


def _check_target(out_dir: Path):
    if not out_dir.exists():
        return
    if not out_dir.is_dir():
        raise ModetrDataError(f"export target {str(out_dir)!r} is not a directory")
    foreign = sorted(path.name for path in out_dir.iterdir() if path.suffix not in EXPORT_SUFFIXES)
    if foreign:
        raise ModetrDataError(
            f"refusing to replace {str(out_dir)!r} which holds other files such as {foreign[0]!r}",
        )


def export_attention(
        model: ModelConfig,
        params: ModetrParams,
        sample: SamplePair,
        out_dir: Union[str, os.PathLike],
) -> list[Path]:
    """
    Writes one PGM per decoder layer and query (``layer{l}_query{q}.pgm``;
    EarlyTPE writes ``_t0``/``_t1`` maps for its two frame blocks)
    plus one PPM per RGB input frame. Returns the written paths.

    Images are staged in a sibling temporary directory that replaces
    ``out_dir`` only once every file was written; an earlier export
    in ``out_dir`` is replaced as a whole.
    """
    out_dir = Path(out_dir)
    _check_target(out_dir)
    preds = predict_sample(model, params, sample)
    maps = attention_maps(preds.cross_attention.data, preds.memory_blocks, preds.feature_size)
    n_dec, n_q, blocks = maps.shape[:3]

    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.tmp-", dir=out_dir.parent))
    names = []
    try:
        for layer in range(n_dec):
            for query in range(n_q):
                for block in range(blocks):
                    suffix = f"_t{block}" if blocks > 1 else ''
                    name = f"layer{layer}_query{query:02d}{suffix}.pgm"
                    write_pgm(staging / name, normalize_map(maps[layer, query, block]))
                    names.append(name)
        for frame_name, frame in _input_frames(model, sample).items():
            name = f"{frame_name}.ppm"
            write_ppm(staging / name, frame)
            names.append(name)
        swap_into_place(staging, out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    logger.info("exported %d images to %s", len(names), out_dir)
    return [out_dir / name for name in names]
