"""
This modetr subpackage generates synthetic two-frame scenes
with analytic optical flow and stores them as dataset directories.
"""
from __future__ import annotations

from modetr.synth.scene import (
    PALETTE, SamplePair, SceneLayout, SceneObject, SceneSpec,
    background_texture, draw_scene, generate_sample, generate_samples, render_pair,
)
from modetr.synth.storage import (
    Dataset, decode_tensor, encode_tensor, read_dataset, read_tensor, write_dataset, write_tensor,
)

__all__ = [
    'SceneSpec', 'SceneObject', 'SamplePair', 'SceneLayout', 'PALETTE',
    'background_texture', 'draw_scene', 'render_pair', 'generate_sample', 'generate_samples',
    'Dataset', 'encode_tensor', 'decode_tensor', 'write_tensor', 'read_tensor',
    'write_dataset', 'read_dataset',
]
