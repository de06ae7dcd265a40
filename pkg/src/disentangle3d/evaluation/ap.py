"""Interpolated average precision on a fixed recall grid.

Grids are stored as integer numerators over a common denominator so that the
"recall >= r" tests are exact: recall tp/n reaches k/m iff tp*m >= k*n.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..exceptions import NoGroundTruth

GRIDS = {
    "R11": (tuple(range(0, 11)), 10),
    "R40": (tuple(range(1, 41)), 40),
}


def recall_grid(name: str) -> np.ndarray:
    nums, den = _grid(name)
    return np.array([k / den for k in nums])


def _grid(name):
    try:
        return GRIDS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown recall grid {name!r}; expected one of {sorted(GRIDS)}") from None


@dataclass(frozen=True)
class PRCurve:
    grid: str
    recall_grid: np.ndarray
    interpolated: np.ndarray
    recall: np.ndarray
    precision: np.ndarray

    @property
    def ap(self) -> float:
        return float(sum(self.interpolated.tolist()) / len(self.interpolated))

    def to_dict(self):
        return {
            "grid": self.grid,
            "recall_grid": self.recall_grid.tolist(),
            "interpolated_precision": self.interpolated.tolist(),
            "recall": self.recall.tolist(),
            "precision": self.precision.tolist(),
        }


def ranked_counts(scores: Sequence[float], is_tp: Sequence[bool]):
    """Cumulative (tp, fp) after each detection, highest score first (stable)."""
    scores = np.asarray(scores, dtype=float)
    flags = np.asarray(is_tp, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    tp = np.cumsum(flags[order])
    fp = np.cumsum(~flags[order])
    return tp, fp


def pr_curve(scores, is_tp, n_gt: int, grid: str = "R40") -> PRCurve:
    if n_gt <= 0:
        raise NoGroundTruth("average precision needs at least one ground-truth object")
    nums, den = _grid(grid)
    tp, fp = ranked_counts(scores, is_tp)
    precision = tp / np.maximum(tp + fp, 1)
    recall = tp / n_gt
    # best precision at or beyond each ranked position
    envelope = np.maximum.accumulate(precision[::-1])[::-1] if precision.size else precision
    interp = np.zeros(len(nums))
    for i, k in enumerate(nums):
        need = -(-k * n_gt // den)  # ceil(k * n_gt / den)
        j = int(np.searchsorted(tp, need, side="left"))
        if j < envelope.size:
            interp[i] = envelope[j]
    return PRCurve(grid.upper(), recall_grid(grid), interp, recall, precision)


def ap_interpolated(scores, is_tp, n_gt: int, grid: str = "R40") -> float:
    """Mean over the grid of the max precision at recall >= r (0 if never reached)."""
    return pr_curve(scores, is_tp, n_gt, grid).ap
