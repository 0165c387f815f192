"""
Assembly of backbone, positional encodings, stream encoders, fusion,
decoder and prediction heads into the five architecture variants.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from modetr.autograd import Tensor, ops
from modetr.exceptions import ModetrContractError, ModetrShapeError
from modetr.model.backbone import BackboneParams, backbone_forward, flatten_tokens
from modetr.model.config import FLOW_CHANNELS, NUM_FRAMES, RGB_CHANNELS, ModelConfig, Variant
from modetr.model.fusion import FusionParams, fuse
from modetr.model.positional import TpeTable, apply_early_tpe, apply_late_tpe, spe_sinusoidal
from modetr.nn import (
    DecoderLayerParams, EncoderLayerParams, LinearParams,
    count_parameters, decoder_stack, embedding_table, encoder_stack, linear, mlp,
)

if TYPE_CHECKING:
    from modetr.synth.scene import SamplePair

__all__ = [
    'ModetrParams', 'PredictionSet',
    'init_params', 'forward', 'model_inputs', 'parameter_groups',
]

logger = logging.getLogger(__name__)


@dataclass
class ModetrParams:
    """
    All trainable tensors of a MODETR network.
    Fields a variant does not use are ``None``.
    """
    #: Backbone of the RGB stream (shared across frames where frames share it)
    backbone: BackboneParams

    #: Encoder stack of the first (or only) stream
    encoder: list[EncoderLayerParams]

    #: Learned object queries, ``N_q×D``; initial decoder input and query positions
    queries: Tensor

    #: Decoder layers
    decoder: list[DecoderLayerParams]

    #: Class head ``D → 3`` over {moving, static, no-object}
    class_head: LinearParams

    #: Box head ``D → D → D → 4``
    box_head: list[LinearParams]

    #: Backbone of the flow stream (RgbOf only)
    flow_backbone: Optional[BackboneParams] = None

    #: Dedicated encoder of the second stream (LateTPE second frame, RgbOf flow)
    second_encoder: Optional[list[EncoderLayerParams]] = None

    #: Temporal positional encoding table (EarlyTPE, LateTPE)
    tpe: Optional[TpeTable] = None

    #: Fusion block (TwoStreamRGB, LateTPE, RgbOf)
    fusion: Optional[FusionParams] = None


@dataclass
class PredictionSet:
    """
    Fixed-size set of N_q slot predictions.
    """
    #: Class logits, ``N_q×3`` over {moving, static, no-object}
    class_logits: Tensor

    #: Boxes in center-size form, ``N_q×4``, every coordinate in (0, 1)
    boxes: Tensor

    #: Cross-attention weights, ``n_dec×h×N_q×L_mem`` (not differentiable)
    cross_attention: Tensor

    #: Number of frame blocks stacked along the memory (2 for EarlyTPE, else 1)
    memory_blocks: int

    #: Feature map size ``H'×W'`` behind every memory block
    feature_size: tuple[int, int]

    @property
    def num_queries(self) -> int:
        return self.class_logits.shape[0]

    @property
    def memory_length(self) -> int:
        return self.cross_attention.shape[-1]


def init_params(config: ModelConfig, seed: int = 0) -> ModetrParams:
    """
    Creates freshly initialized parameters for the configured variant.
    """
    rng = np.random.default_rng(seed)
    variant = config.variant
    dim = config.d_model

    def new_encoder() -> list[EncoderLayerParams]:
        return [
            EncoderLayerParams.init(rng, dim, config.num_heads, config.d_ff)
            for _ in range(config.num_encoder_layers)
        ]

    backbone = BackboneParams.init(rng, RGB_CHANNELS, config.backbone_channels, dim)
    encoder = new_encoder()
    flow_backbone = None
    second_encoder = None
    if variant is Variant.RGB_OF:
        flow_backbone = BackboneParams.init(rng, FLOW_CHANNELS, config.backbone_channels, dim)
        second_encoder = new_encoder()
    elif variant is Variant.LATE_TPE:
        second_encoder = new_encoder()
    tpe = TpeTable.init(NUM_FRAMES, dim) if variant.uses_tpe and config.use_tpe else None
    fusion = FusionParams.init(rng, dim, config.fusion) if variant.fuses_streams else None

    params = ModetrParams(
        backbone=backbone,
        encoder=encoder,
        queries=embedding_table(rng, config.num_queries, dim),
        decoder=[
            DecoderLayerParams.init(rng, dim, config.num_heads, config.d_ff)
            for _ in range(config.num_decoder_layers)
        ],
        class_head=LinearParams.init(rng, dim, 3),
        box_head=[
            LinearParams.init(rng, dim, dim),
            LinearParams.init(rng, dim, dim),
            LinearParams.init(rng, dim, 4),
        ],
        flow_backbone=flow_backbone,
        second_encoder=second_encoder,
        tpe=tpe,
        fusion=fusion,
    )
    logger.debug("initialized %s with %d parameters", variant.value, count_parameters(params))
    return params


def parameter_groups(params: ModetrParams) -> dict[str, int]:
    """
    Parameter count per top-level group, omitting groups the variant lacks.
    """
    groups = {
        'backbone': params.backbone,
        'flow_backbone': params.flow_backbone,
        'encoder': params.encoder,
        'second_encoder': params.second_encoder,
        'tpe': params.tpe,
        'fusion': params.fusion,
        'queries': params.queries,
        'decoder': params.decoder,
        'heads': [params.class_head, params.box_head],
    }
    return {name: count_parameters(group) for name, group in groups.items() if group is not None}


def _check_inputs(config: ModelConfig, inputs: Sequence[Tensor]):
    variant = config.variant
    if len(inputs) != variant.num_inputs:
        raise ModetrContractError(
            f"{variant.value} expects {variant.num_inputs} input(s), got {len(inputs)}",
        )
    for index, tensor in enumerate(inputs):
        channels = FLOW_CHANNELS if variant.uses_flow and index == 1 else RGB_CHANNELS
        expected = (channels, config.height, config.width)
        if tensor.shape != expected:
            raise ModetrShapeError(
                f"{variant.value} input {index} must have shape {expected}, got {tensor.shape}",
            )


def _require(value, name: str, variant: Variant):
    if value is None:
        raise ModetrContractError(f"{variant.value} parameters lack the {name} group")
    return value


def forward(config: ModelConfig, params: ModetrParams, inputs: Sequence[Tensor]) -> PredictionSet:
    """
    Runs the configured variant.

    Inputs per variant: Baseline takes one RGB frame;
    TwoStreamRGB, EarlyTPE and LateTPE take frames t and t+1;
    RgbOf takes one RGB frame and one 2-channel flow map.
    """
    _check_inputs(config, inputs)
    variant = config.variant
    spe_table = spe_sinusoidal(config.num_tokens, config.d_model)
    spe = spe_table.table
    tpe = params.tpe if config.use_tpe else None
    memory_blocks = 1

    def rgb_tokens(image: Tensor) -> Tensor:
        return flatten_tokens(backbone_forward(params.backbone, image))

    if variant is Variant.BASELINE:
        memory = encoder_stack(params.encoder, rgb_tokens(inputs[0]), spe)
        mem_pos = spe

    elif variant is Variant.TWO_STREAM_RGB:
        encoded = [encoder_stack(params.encoder, rgb_tokens(frame), spe) for frame in inputs]
        memory = fuse(encoded[0], encoded[1], _require(params.fusion, 'fusion', variant))
        mem_pos = spe

    elif variant is Variant.EARLY_TPE:
        frame_tokens = [rgb_tokens(frame) for frame in inputs]
        tokens, positions = apply_early_tpe(frame_tokens, spe_table, tpe)
        if tpe is not None:
            # frame identity has to reach the memory values the decoder reads
            temporal = ops.concat(
                [tpe.rows_for(index, config.num_tokens) for index in range(len(frame_tokens))],
                axis=0,
            )
            tokens = ops.add(tokens, temporal)
        if config.early_tpe_uses_encoder:
            memory = encoder_stack(params.encoder, tokens, positions)
        else:
            memory = tokens
        mem_pos = ops.concat([spe] * len(frame_tokens), axis=0)
        memory_blocks = len(frame_tokens)

    elif variant is Variant.LATE_TPE:
        second_encoder = _require(params.second_encoder, 'second_encoder', variant)
        encoded = [
            encoder_stack(params.encoder, rgb_tokens(inputs[0]), spe),
            encoder_stack(second_encoder, rgb_tokens(inputs[1]), spe),
        ]
        if tpe is not None:
            encoded = apply_late_tpe(encoded, tpe)
        memory = fuse(encoded[0], encoded[1], _require(params.fusion, 'fusion', variant))
        mem_pos = spe

    elif variant is Variant.RGB_OF:
        flow_backbone = _require(params.flow_backbone, 'flow_backbone', variant)
        second_encoder = _require(params.second_encoder, 'second_encoder', variant)
        rgb = encoder_stack(params.encoder, rgb_tokens(inputs[0]), spe)
        flow_tokens = flatten_tokens(backbone_forward(flow_backbone, inputs[1]))
        flow = encoder_stack(second_encoder, flow_tokens, spe)
        memory = fuse(rgb, flow, _require(params.fusion, 'fusion', variant))
        mem_pos = spe

    else:  # pragma: no cover
        raise RuntimeError("something went horribly wrong")

    hidden, cross_attentions = decoder_stack(
        params.decoder, params.queries, memory, params.queries, mem_pos,
    )
    class_logits = linear(params.class_head, hidden)
    boxes = ops.sigmoid(mlp(params.box_head, hidden))
    return PredictionSet(
        class_logits=class_logits,
        boxes=boxes,
        cross_attention=Tensor(np.stack([attn.data for attn in cross_attentions])),
        memory_blocks=memory_blocks,
        feature_size=config.feature_size,
    )


def model_inputs(config: ModelConfig, sample: SamplePair) -> list[Tensor]:
    """
    Selects and prepares the network inputs of a sample for the configured variant.
    Detection targets live on frame t+1, so single-frame variants see frame t+1.
    Flow is fed as raw ``(dx, dy)`` divided by the image width.
    """
    variant = config.variant
    if variant is Variant.BASELINE:
        return [sample.frame_t1]
    if variant is Variant.RGB_OF:
        if sample.flow is None:
            raise ModetrContractError("RgbOf needs a sample with optical flow")
        return [sample.frame_t1, Tensor(sample.flow.data / float(config.width))]
    return [sample.frame_t, sample.frame_t1]
