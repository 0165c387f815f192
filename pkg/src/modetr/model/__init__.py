"""
This modetr subpackage assembles the detection transformer:
configuration, positional encodings, backbone, stream fusion
and the five architecture variants.
"""
from __future__ import annotations

from modetr.model.backbone import BackboneParams, backbone_forward, flatten_tokens, unflatten_tokens
from modetr.model.config import (
    BACKBONE_STRIDE, FLOW_CHANNELS, NUM_FRAMES, RGB_CHANNELS, ModelConfig, Variant,
)
from modetr.model.fusion import FusionParams, fuse, fuse_channel_halved, fuse_concat_project
from modetr.model.network import (
    ModetrParams, PredictionSet, forward, init_params, model_inputs, parameter_groups,
)
from modetr.model.positional import (
    SpeTable, TpeTable, apply_early_tpe, apply_late_tpe, spe_sinusoidal,
)

__all__ = [
    'Variant', 'ModelConfig',
    'RGB_CHANNELS', 'FLOW_CHANNELS', 'NUM_FRAMES', 'BACKBONE_STRIDE',
    'SpeTable', 'TpeTable', 'spe_sinusoidal', 'apply_early_tpe', 'apply_late_tpe',
    'BackboneParams', 'backbone_forward', 'flatten_tokens', 'unflatten_tokens',
    'FusionParams', 'fuse', 'fuse_channel_halved', 'fuse_concat_project',
    'ModetrParams', 'PredictionSet', 'init_params', 'forward', 'model_inputs', 'parameter_groups',
]
