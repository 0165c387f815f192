"""
Run configuration: model hyperparameters, optimizer settings,
matching weights, seeds and data paths, read from JSON files.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from modetr.exceptions import ModetrConfigError
from modetr.fileloc import FileLoc
from modetr.matching import CostWeights
from modetr.model import ModelConfig, Variant
from modetr.model.config import check_known_keys

__all__ = ['RunConfig', 'load_json_object']

_MODEL_FIELDS = frozenset(fld.name for fld in dataclasses.fields(ModelConfig))


@dataclass(frozen=True)
class RunConfig:
    """
    Everything a training run needs besides the data itself.
    """
    model: ModelConfig = field(default_factory=ModelConfig)

    #: Adam learning rate
    lr: float = 1e-3

    #: Adam moment decay rates
    betas: tuple[float, float] = (0.9, 0.999)

    #: Adam denominator epsilon
    adam_eps: float = 1e-8

    #: Global gradient-norm clip (0 disables clipping)
    grad_clip: float = 1.0

    #: Optimizer steps per run
    steps: int = 300

    #: Samples per optimizer step
    batch_size: int = 4

    #: Write a checkpoint every this many steps (0 disables periodic checkpoints)
    checkpoint_every: int = 100

    #: Seed of parameter initialization and batch sampling
    seed: int = 0

    #: Matching cost and loss weights
    cost: CostWeights = field(default_factory=CostWeights)

    #: Default training dataset directory
    train_data: Optional[str] = None

    #: Default validation dataset directory
    val_data: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'betas', tuple(self.betas))
        for name in ('lr', 'adam_eps'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
                raise ModetrConfigError(f"{name} must be a positive number, got {value!r}", field=name)
        if isinstance(self.grad_clip, bool) or not isinstance(self.grad_clip, (int, float)) \
                or self.grad_clip < 0:
            raise ModetrConfigError(
                f"grad_clip must be a non-negative number, got {self.grad_clip!r}", field='grad_clip',
            )
        if len(self.betas) != 2 or not all(
                isinstance(b, (int, float)) and 0.0 <= b < 1.0 for b in self.betas):
            raise ModetrConfigError(f"betas must be two numbers in [0, 1), got {self.betas!r}", field='betas')
        for name, low in (('steps', 0), ('batch_size', 1), ('checkpoint_every', 0), ('seed', 0)):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < low:
                raise ModetrConfigError(f"{name} must be an integer >= {low}, got {value!r}", field=name)

    @property
    def variant(self) -> Variant:
        return self.model.variant

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def with_variant(self, variant: Union[Variant, str]) -> RunConfig:
        return dataclasses.replace(self, model=self.model.with_variant(variant))

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        """
        Builds a run configuration from a JSON object.

        Model fields may be given inside a ``model`` object or flat at the top level
        (e.g. ``"variant": "RgbOf"``); the same field may not appear in both places.
        """
        if not isinstance(data, dict):
            raise ModetrConfigError("run configuration must be a JSON object")
        data = dict(data)
        model = data.pop('model', {}) or {}
        if not isinstance(model, dict):
            raise ModetrConfigError("'model' must be a JSON object", field='model')
        model = dict(model)
        for key in list(data):
            if key in _MODEL_FIELDS:
                if key in model:
                    raise ModetrConfigError(
                        f"model field {key!r} given both flat and inside 'model'", field=key,
                    )
                model[key] = data.pop(key)
        cost = data.pop('cost', {}) or {}
        if not isinstance(cost, dict):
            raise ModetrConfigError("'cost' must be a JSON object", field='cost')
        check_known_keys(cls, data)
        return cls(model=ModelConfig.from_dict(model), cost=CostWeights.from_dict(cost), **data)

    def to_dict(self) -> dict:
        return {
            'model': self.model.to_dict(),
            'lr': self.lr,
            'betas': list(self.betas),
            'adam_eps': self.adam_eps,
            'grad_clip': self.grad_clip,
            'steps': self.steps,
            'batch_size': self.batch_size,
            'checkpoint_every': self.checkpoint_every,
            'seed': self.seed,
            'cost': self.cost.to_dict(),
            'train_data': self.train_data,
            'val_data': self.val_data,
        }

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> RunConfig:
        return cls.from_dict(load_json_object(path))


def load_json_object(path: Union[str, os.PathLike]) -> dict:
    """
    Reads a JSON object from a configuration file,
    reporting syntax errors with their byte offset.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModetrConfigError(f"cannot read configuration {str(path)!r}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModetrConfigError(
            f"invalid JSON ({exc.msg}) at %(pos)s",
            pos=FileLoc.of(path, len(text[:exc.pos].encode())),
        ) from None
    if not isinstance(data, dict):
        raise ModetrConfigError(f"configuration {str(path)!r} must hold a JSON object")
    return data
