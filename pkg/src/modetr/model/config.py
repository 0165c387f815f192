"""
Model configuration shared by every architecture variant.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Union

from modetr.exceptions import ModetrConfigError

__all__ = ['Variant', 'ModelConfig', 'check_known_keys']


class Variant(str, enum.Enum):
    """
    The five architecture variants.
    """
    #: Single RGB frame, one encoder
    BASELINE = 'Baseline'

    #: Two RGB frames through a shared backbone and shared encoder, channel-halving fusion
    TWO_STREAM_RGB = 'TwoStreamRGB'

    #: Two RGB frames, temporal encoding added before one shared encoder over both frames
    EARLY_TPE = 'EarlyTPE'

    #: Two RGB frames, one dedicated encoder per frame, temporal encoding added afterwards
    LATE_TPE = 'LateTPE'

    #: One RGB frame and one optical flow map, separate backbones and encoders
    RGB_OF = 'RgbOf'

    @property
    def num_inputs(self) -> int:
        return 1 if self is Variant.BASELINE else 2

    @property
    def uses_flow(self) -> bool:
        return self is Variant.RGB_OF

    @property
    def uses_tpe(self) -> bool:
        return self in (Variant.EARLY_TPE, Variant.LATE_TPE)

    @property
    def fuses_streams(self) -> bool:
        return self in (Variant.TWO_STREAM_RGB, Variant.LATE_TPE, Variant.RGB_OF)


#: Channel count of each input stream
RGB_CHANNELS = 3
FLOW_CHANNELS = 2

#: Temporal window length
NUM_FRAMES = 2

#: Backbone downsampling factor (three stride-2 blocks)
BACKBONE_STRIDE = 8

FUSION_MODES = ('halve', 'project')


def check_known_keys(cls: type, data: dict, prefix: str = ''):
    """
    Rejects keys that do not name a dataclass field.
    """
    known = {fld.name for fld in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ModetrConfigError(f"unknown configuration key {prefix}{key!r}", field=f"{prefix}{key}")


@dataclass(frozen=True)
class ModelConfig:
    """
    Hyperparameters of a MODETR network.
    """
    #: Architecture variant
    variant: Variant = Variant.BASELINE

    #: Input height in pixels (divisible by 8)
    height: int = 64

    #: Input width in pixels (divisible by 8)
    width: int = 64

    #: Model dim D (even, divisible by the head count)
    d_model: int = 64

    #: Attention heads h
    num_heads: int = 4

    #: Encoder layers per stack
    num_encoder_layers: int = 2

    #: Decoder layers
    num_decoder_layers: int = 2

    #: Hidden size of the feed-forward blocks
    d_ff: int = 128

    #: Number of object queries N_q
    num_queries: int = 10

    #: Channels of the first two backbone blocks (the last one outputs D)
    backbone_channels: tuple[int, int] = (32, 64)

    #: Whether temporal variants add the temporal encoding at all
    use_tpe: bool = True

    #: Whether the early-TPE variant runs its shared encoder
    #: (false feeds the position-augmented backbone tokens straight to the decoder)
    early_tpe_uses_encoder: bool = True

    #: Stream fusion: 'halve' (1×1 conv D→D/2 per stream, then concat)
    #: or 'project' (concat, then 1×1 conv 2D→D)
    fusion: str = 'halve'

    def __post_init__(self):
        object.__setattr__(self, 'variant', _parse_variant(self.variant))
        object.__setattr__(self, 'backbone_channels', tuple(self.backbone_channels))
        for name in ('height', 'width', 'd_model', 'num_heads', 'num_encoder_layers',
                     'num_decoder_layers', 'd_ff', 'num_queries'):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ModetrConfigError(f"{name} must be a positive integer, got {value!r}", field=name)
        for name in ('use_tpe', 'early_tpe_uses_encoder'):
            if not isinstance(getattr(self, name), bool):
                raise ModetrConfigError(f"{name} must be a boolean", field=name)
        if self.height % BACKBONE_STRIDE or self.width % BACKBONE_STRIDE:
            raise ModetrConfigError(
                f"input size {self.height}×{self.width} must be divisible by {BACKBONE_STRIDE}",
                field='height' if self.height % BACKBONE_STRIDE else 'width',
            )
        if self.d_model % 2:
            raise ModetrConfigError(f"d_model must be even, got {self.d_model}", field='d_model')
        if self.d_model % self.num_heads:
            raise ModetrConfigError(
                f"num_heads {self.num_heads} must divide d_model {self.d_model}",
                field='num_heads',
            )
        if len(self.backbone_channels) != 2 or any(
                not isinstance(c, int) or c < 1 for c in self.backbone_channels):
            raise ModetrConfigError(
                f"backbone_channels must be two positive integers, got {self.backbone_channels!r}",
                field='backbone_channels',
            )
        if self.fusion not in FUSION_MODES:
            raise ModetrConfigError(
                f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}",
                field='fusion',
            )

    @property
    def feature_size(self) -> tuple[int, int]:
        """
        Spatial size ``H'×W'`` of the backbone feature map.
        """
        return self.height // BACKBONE_STRIDE, self.width // BACKBONE_STRIDE

    @property
    def num_tokens(self) -> int:
        feat_h, feat_w = self.feature_size
        return feat_h * feat_w

    def with_variant(self, variant: Union[Variant, str]) -> ModelConfig:
        return dataclasses.replace(self, variant=_parse_variant(variant))

    @classmethod
    def from_dict(cls, data: dict) -> ModelConfig:
        check_known_keys(cls, data, prefix='model.')
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            fld.name: (
                getattr(self, fld.name).value if fld.name == 'variant'
                else list(getattr(self, fld.name)) if fld.name == 'backbone_channels'
                else getattr(self, fld.name)
            )
            for fld in dataclasses.fields(self)
        }


def _parse_variant(value: Union[Variant, str]) -> Variant:
    if isinstance(value, Variant):
        return value
    try:
        return Variant(value)
    except ValueError:
        names = ', '.join(v.value for v in Variant)
        raise ModetrConfigError(
            f"unknown variant {value!r}; expected one of {names}", field='variant',
        ) from None
