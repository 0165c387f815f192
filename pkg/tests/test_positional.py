from __future__ import annotations

import math

import numpy as np
import pytest

from modetr.autograd import Tensor, backward, ops
from modetr.exceptions import ModetrConfigError, ModetrContractError, ModetrShapeError
from modetr.model import TpeTable, apply_early_tpe, apply_late_tpe, spe_sinusoidal


@pytest.mark.parametrize(
    ("pos", "index", "expected"),
    [
        pytest.param(0, 0, 0.0, id="sin_at_origin"),
        pytest.param(0, 1, 1.0, id="cos_at_origin"),
        pytest.param(3, 0, math.sin(3.0), id="sin_first_pair"),
        pytest.param(3, 1, math.cos(3.0), id="cos_first_pair"),
        pytest.param(5, 2, math.sin(5.0 / 10000 ** (2 / 8)), id="sin_second_pair"),
        pytest.param(5, 7, math.cos(5.0 / 10000 ** (6 / 8)), id="cos_last_pair"),
    ],
)
def test_spe_values(pos, index, expected):
    table = spe_sinusoidal(16, 8).table.data
    assert table[pos, index] == pytest.approx(expected, abs=1e-12)


def test_spe_shape_and_range():
    spe = spe_sinusoidal(64, 32)
    assert spe.table.shape == (64, 32)
    assert spe.num_tokens == 64
    assert np.all(np.abs(spe.table.data) <= 1.0)
    assert not spe.table.requires_grad


def test_spe_rows_are_distinct():
    table = spe_sinusoidal(1024, 64).table.data
    gram = table @ table.T
    squared = np.diag(gram)[:, None] + np.diag(gram)[None, :] - 2.0 * gram
    np.fill_diagonal(squared, np.inf)
    # for every offset below 1024 some frequency turns by 0.75 to 1 rad
    assert np.sqrt(np.maximum(squared, 0.0)).min() > 0.05


@pytest.mark.parametrize(
    ("num_tokens", "dim"),
    [
        pytest.param(4, 7, id="odd_dim"),
        pytest.param(0, 8, id="no_tokens"),
    ],
)
def test_spe_rejects_bad_sizes(num_tokens, dim):
    with pytest.raises(ModetrConfigError):
        spe_sinusoidal(num_tokens, dim)


def test_tpe_starts_at_zero():
    tpe = TpeTable.init(2, 6)
    assert tpe.num_frames == 2
    assert tpe.table.requires_grad
    np.testing.assert_array_equal(tpe.table.data, np.zeros((2, 6)))


def test_tpe_rows_for_rejects_frame_outside_window():
    with pytest.raises(ModetrContractError):
        TpeTable.init(2, 4).rows_for(2, 3)


def test_early_tpe_concatenates_in_time_order():
    rng = np.random.default_rng(1)
    spe = spe_sinusoidal(4, 6)
    tpe = TpeTable.init(2, 6)
    tpe.table.data[:] = rng.normal(size=(2, 6))
    frames = [Tensor(rng.normal(size=(4, 6))) for _ in range(2)]
    tokens, positions = apply_early_tpe(frames, spe, tpe)
    assert tokens.shape == positions.shape == (8, 6)
    np.testing.assert_array_equal(tokens.data[:4], frames[0].data)
    np.testing.assert_array_equal(tokens.data[4:], frames[1].data)
    np.testing.assert_allclose(positions.data[:4], spe.table.data + tpe.table.data[0])
    np.testing.assert_allclose(positions.data[4:], spe.table.data + tpe.table.data[1])


def test_early_tpe_without_table_repeats_spatial_code():
    spe = spe_sinusoidal(4, 6)
    frames = [Tensor(np.zeros((4, 6))), Tensor(np.ones((4, 6)))]
    _, positions = apply_early_tpe(frames, spe, None)
    np.testing.assert_array_equal(positions.data, np.concatenate([spe.table.data] * 2))


def test_early_tpe_rejects_mismatched_frames():
    spe = spe_sinusoidal(4, 6)
    with pytest.raises(ModetrShapeError):
        apply_early_tpe([Tensor(np.zeros((4, 6))), Tensor(np.zeros((3, 6)))], spe, None)


def test_late_tpe_adds_one_row_per_frame():
    tpe = TpeTable.init(2, 3)
    tpe.table.data[:] = [[1.0, 2.0, 3.0], [-1.0, -2.0, -3.0]]
    frames = [Tensor(np.zeros((5, 3))), Tensor(np.zeros((5, 3)))]
    first, second = apply_late_tpe(frames, tpe)
    np.testing.assert_array_equal(first.data, np.tile([1.0, 2.0, 3.0], (5, 1)))
    np.testing.assert_array_equal(second.data, np.tile([-1.0, -2.0, -3.0], (5, 1)))


def test_tpe_gradient_sums_over_tokens():
    tpe = TpeTable.init(2, 3)
    frames = [Tensor(np.zeros((5, 3))), Tensor(np.zeros((5, 3)))]
    first, second = apply_late_tpe(frames, tpe)
    backward(ops.add(ops.sum(first), ops.scale(ops.sum(second), 2.0)))
    np.testing.assert_allclose(tpe.table.grad, [[5.0] * 3, [10.0] * 3])


def test_late_tpe_rejects_too_many_frames():
    tpe = TpeTable.init(2, 3)
    frames = [Tensor(np.zeros((2, 3)))] * 3
    with pytest.raises(ModetrContractError):
        apply_late_tpe(frames, tpe)
