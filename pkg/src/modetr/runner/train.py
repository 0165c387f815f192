"""
Training loop: sampled mini-batches, Hungarian matching, set loss,
Adam updates, per-step CSV records and periodic checkpoints.
"""
from __future__ import annotations

import csv
import logging
import os
from collections.abc import Callable
from dataclasses import dataclass
from typing import Optional, TextIO, Union

import numpy as np

from modetr.autograd import Tensor, backward, ops
from modetr.exceptions import ModetrDataError
from modetr.matching import match_and_loss
from modetr.model import ModelConfig, Variant, forward, init_params, model_inputs
from modetr.nn import named_parameters
from modetr.runner.checkpoint import Checkpoint, save_checkpoint
from modetr.runner.config import RunConfig
from modetr.runner.optim import Adam
from modetr.synth import Dataset

__all__ = ['LOG_COLUMNS', 'StepRecord', 'CsvStepLog', 'check_compatible', 'train']

logger = logging.getLogger(__name__)

LOG_COLUMNS = ('step', 'total', 'loss_cls', 'loss_l1', 'loss_giou')


@dataclass(frozen=True)
class StepRecord:
    """
    Batch-averaged losses of one optimizer step.
    """
    step: int
    total: float
    loss_cls: float
    loss_l1: float
    loss_giou: float

    def row(self) -> list[str]:
        return [str(self.step)] + [repr(getattr(self, name)) for name in LOG_COLUMNS[1:]]


class CsvStepLog:
    """
    Writes step records as CSV rows, header first.
    """

    def __init__(self, stream: TextIO):
        self.stream = stream
        self.writer = csv.writer(stream, lineterminator='\n')
        self.writer.writerow(LOG_COLUMNS)

    def __call__(self, record: StepRecord):
        self.writer.writerow(record.row())
        self.stream.flush()


def check_compatible(model: ModelConfig, dataset: Dataset):
    """
    Rejects datasets the variant cannot consume, before any work is done.
    """
    if not len(dataset):
        raise ModetrDataError("dataset holds no samples")
    if model.variant is Variant.RGB_OF and not dataset.has_flow:
        raise ModetrDataError(f"{model.variant.value} needs optical flow but the dataset has none")
    sample = dataset[0]
    if (sample.height, sample.width) != (model.height, model.width):
        raise ModetrDataError(
            f"dataset frames are {sample.height}×{sample.width} "
            f"but the model expects {model.height}×{model.width}",
        )
    most = max(len(s.objects) for s in dataset.samples)
    if most > model.num_queries:
        raise ModetrDataError(
            f"a sample holds {most} objects but the model has only {model.num_queries} queries",
        )


def _new_rng(state: Optional[dict], seed: int) -> np.random.Generator:
    rng = np.random.default_rng([seed, 1])
    if state is not None:
        rng.bit_generator.state = state
    return rng


def train(
        config: RunConfig,
        dataset: Dataset,
        steps: Optional[int] = None,
        resume: Optional[Checkpoint] = None,
        on_step: Optional[Callable[[StepRecord], None]] = None,
        checkpoint_path: Optional[Union[str, os.PathLike]] = None,
) -> Checkpoint:
    """
    Runs ``steps`` optimizer steps (default: ``config.steps``),
    continuing from ``resume`` when given, and returns the final state.

    A checkpoint is written every ``config.checkpoint_every`` steps
    and once at the end when ``checkpoint_path`` is given.
    """
    check_compatible(config.model, dataset)
    steps = config.steps if steps is None else steps
    if resume is not None:
        ckpt = resume
        ckpt.config = config
    else:
        ckpt = Checkpoint(config=config, params=init_params(config.model, seed=config.seed))

    named = list(named_parameters(ckpt.params))
    optimizer = Adam(named, lr=config.lr, betas=config.betas, eps=config.adam_eps, grad_clip=config.grad_clip)
    optimizer.load_state(ckpt.optimizer_t, ckpt.optimizer_arrays)
    rng = _new_rng(ckpt.rng_state, config.seed)
    batch_size = min(config.batch_size, len(dataset))

    for _ in range(steps):
        batch = rng.choice(len(dataset), size=batch_size, replace=False)
        optimizer.zero_grad()
        totals, parts = [], []
        for index in batch:
            sample = dataset[int(index)]
            preds = forward(config.model, ckpt.params, model_inputs(config.model, sample))
            _, loss = match_and_loss(preds, sample.objects, config.cost)
            totals.append(loss.total)
            parts.append(loss.as_floats())
        total = ops.scale(_sum(totals), 1.0 / len(totals))
        backward(total)
        grad_norm = optimizer.step()
        ckpt.step += 1

        record = StepRecord(
            step=ckpt.step,
            total=total.item(),
            loss_cls=float(np.mean([p['loss_cls'] for p in parts])),
            loss_l1=float(np.mean([p['loss_l1'] for p in parts])),
            loss_giou=float(np.mean([p['loss_giou'] for p in parts])),
        )
        logger.debug("step %d: total %.6f, grad norm %.4f", record.step, record.total, grad_norm)
        if on_step is not None:
            on_step(record)
        if checkpoint_path is not None and config.checkpoint_every \
                and ckpt.step % config.checkpoint_every == 0:
            _snapshot(ckpt, optimizer, rng)
            save_checkpoint(checkpoint_path, ckpt)

    _snapshot(ckpt, optimizer, rng)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, ckpt)
    return ckpt


def _sum(tensors: list[Tensor]) -> Tensor:
    result = tensors[0]
    for tensor in tensors[1:]:
        result = ops.add(result, tensor)
    return result


def _snapshot(ckpt: Checkpoint, optimizer: Adam, rng: np.random.Generator):
    ckpt.rng_state = rng.bit_generator.state
    ckpt.optimizer_t = optimizer.t
    ckpt.optimizer_arrays = {name: array.copy() for name, array in optimizer.state_arrays().items()}
