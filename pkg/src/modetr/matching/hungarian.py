"""
Exact rectangular assignment (Kuhn–Munkres with dual potentials).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from modetr.exceptions import ModetrContractError

__all__ = ['Assignment', 'hungarian']


@dataclass(frozen=True)
class Assignment:
    """
    Injective map from ground-truth (row) indices to prediction (column) indices.
    """
    #: ``(gt_index, pred_index)`` pairs sorted by gt index
    pairs: tuple[tuple[int, int], ...]

    def __len__(self):
        return len(self.pairs)

    @property
    def gt_indices(self) -> list[int]:
        return [gt for gt, _ in self.pairs]

    @property
    def pred_indices(self) -> list[int]:
        return [pred for _, pred in self.pairs]

    def total_cost(self, cost: np.ndarray) -> float:
        return float(sum(cost[gt, pred] for gt, pred in self.pairs))

    def validate(self, num_gts: int, num_preds: int):
        """
        Checks that the pairs cover every ground truth exactly once
        and use distinct in-range prediction slots.
        """
        gts = self.gt_indices
        preds = self.pred_indices
        if sorted(gts) != list(range(num_gts)):
            raise ModetrContractError(
                f"assignment must cover ground truths 0..{num_gts - 1} exactly once, got {gts}",
            )
        if len(set(preds)) != len(preds) or any(not 0 <= p < num_preds for p in preds):
            raise ModetrContractError(
                f"assignment uses invalid or repeated prediction slots {preds} "
                f"for {num_preds} predictions",
            )


def hungarian(cost: np.ndarray) -> Assignment:
    """
    Finds the assignment of every row to a distinct column
    with minimum total cost, for an ``R×C`` matrix with ``R ≤ C``.

    Rows are inserted one at a time; each insertion grows an alternating tree
    from a virtual column 0 while keeping dual potentials feasible,
    then flips the augmenting path that was found.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ModetrContractError(f"cost matrix must be 2-D, got shape {cost.shape}")
    rows, cols = cost.shape
    if rows > cols:
        raise ModetrContractError(f"cannot assign {rows} rows to only {cols} columns")
    if not np.all(np.isfinite(cost)):
        raise ModetrContractError("cost matrix must contain only finite entries")
    if rows == 0:
        return Assignment(())

    # Arrays are 1-indexed; index 0 is the virtual root of the alternating tree
    row_pot = [0.0] * (rows + 1)
    col_pot = [0.0] * (cols + 1)
    row_of_col = [0] * (cols + 1)
    way = [0] * (cols + 1)
    table = cost.tolist()

    for row in range(1, rows + 1):
        row_of_col[0] = row
        col = 0
        min_slack = [math.inf] * (cols + 1)
        used = [False] * (cols + 1)
        while True:
            used[col] = True
            cur_row = row_of_col[col]
            delta = math.inf
            next_col = 0
            for j in range(1, cols + 1):
                if used[j]:
                    continue
                slack = table[cur_row - 1][j - 1] - row_pot[cur_row] - col_pot[j]
                if slack < min_slack[j]:
                    min_slack[j] = slack
                    way[j] = col
                if min_slack[j] < delta:
                    delta = min_slack[j]
                    next_col = j
            for j in range(cols + 1):
                if used[j]:
                    row_pot[row_of_col[j]] += delta
                    col_pot[j] -= delta
                else:
                    min_slack[j] -= delta
            col = next_col
            if row_of_col[col] == 0:
                break
        # Flip the augmenting path back to the root
        while col:
            prev = way[col]
            row_of_col[col] = row_of_col[prev]
            col = prev

    pairs = sorted(
        (row_of_col[j] - 1, j - 1)
        for j in range(1, cols + 1)
        if row_of_col[j] != 0
    )
    return Assignment(tuple(pairs))
