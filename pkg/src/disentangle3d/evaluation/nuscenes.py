"""nuScenes-style car detection metrics: center-distance AP and TP errors.

Boxes live in a frame whose ground plane is (x, y) and whose z axis points
up, as in the nuScenes global frame.  Sizes are (width, length, height).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ..exceptions import NoGroundTruth

DIST_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)
TP_DIST = 2.0
MIN_RECALL = 0.1
MIN_PRECISION = 0.1
N_RECALL_BINS = 101


@dataclass(frozen=True)
class NuscBox:
    sample: str
    center: tuple
    size: tuple
    yaw: float
    score: Optional[float] = None


def center_distance(a: NuscBox, b: NuscBox) -> float:
    return math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])


def scale_iou(a: NuscBox, b: NuscBox) -> float:
    """IoU of the two boxes after aligning centers and orientation."""
    inter = float(np.prod(np.minimum(a.size, b.size)))
    union = float(np.prod(a.size)) + float(np.prod(b.size)) - inter
    return inter / union


def yaw_difference(a: NuscBox, b: NuscBox) -> float:
    """Absolute yaw difference wrapped to [0, pi]."""
    d = (a.yaw - b.yaw) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


@dataclass
class Accumulation:
    tp: np.ndarray
    fp: np.ndarray
    n_gt: int
    trans_err: list
    scale_err: list
    orient_err: list

    @property
    def recall(self):
        return self.tp / self.n_gt

    @property
    def precision(self):
        return self.tp / np.maximum(self.tp + self.fp, 1)

    def interpolated_precision(self) -> np.ndarray:
        """Precision on 101 evenly spaced recall values; 0 beyond max recall."""
        grid = np.linspace(0.0, 1.0, N_RECALL_BINS)
        if self.tp.size == 0:
            return np.zeros(N_RECALL_BINS)
        return np.interp(grid, self.recall, self.precision, right=0.0)


def accumulate(dets: Sequence[NuscBox], gts: Sequence[NuscBox], dist_th: float) -> Accumulation:
    """Greedy matching by ground-plane center distance, highest score first."""
    if not gts:
        raise NoGroundTruth("nuScenes AP needs at least one ground-truth box")
    by_sample = {}
    for gi, g in enumerate(gts):
        by_sample.setdefault(g.sample, []).append(gi)
    taken = np.zeros(len(gts), bool)
    order = np.argsort(-np.array([d.score for d in dets], dtype=float), kind="stable")
    flags = []
    te, se, oe = [], [], []
    for di in order:
        det = dets[di]
        best, best_d = -1, math.inf
        for gi in by_sample.get(det.sample, ()):
            if taken[gi]:
                continue
            d = center_distance(det, gts[gi])
            if d < best_d:
                best, best_d = gi, d
        if best >= 0 and best_d < dist_th:
            taken[best] = True
            flags.append(True)
            te.append(best_d)
            se.append(1.0 - scale_iou(det, gts[best]))
            oe.append(yaw_difference(det, gts[best]))
        else:
            flags.append(False)
    flags = np.array(flags, dtype=bool)
    return Accumulation(np.cumsum(flags), np.cumsum(~flags), len(gts), te, se, oe)


def calc_ap(precision: np.ndarray, min_recall=MIN_RECALL, min_precision=MIN_PRECISION) -> float:
    """Area under the interpolated curve over recall > min_recall, precision floor removed."""
    prec = np.asarray(precision[int(round(100 * min_recall)) + 1 :], dtype=float) - min_precision
    prec[prec < 0] = 0.0
    return min(1.0, float(prec.mean()) / (1.0 - min_precision))


@dataclass
class NuscenesReport:
    ap: dict
    mAP: float
    ate: float
    ase: float
    aoe: float
    curves: dict

    def to_dict(self, include_curves=True):
        def clean(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        out = {
            "AP": {f"{d:g}": v for d, v in self.ap.items()},
            "mAP": self.mAP,
            "ATE": clean(self.ate),
            "ASE": clean(self.ase),
            "AOE": clean(self.aoe),
        }
        if include_curves:
            out["curves"] = {f"{d:g}": c.tolist() for d, c in self.curves.items()}
        return out


def evaluate_nuscenes_car(
    dets: Sequence[NuscBox],
    gts: Sequence[NuscBox],
    dist_thresholds=DIST_THRESHOLDS,
    tp_dist: float = TP_DIST,
    min_recall: float = MIN_RECALL,
    min_precision: Optional[float] = MIN_PRECISION,
) -> NuscenesReport:
    """AP at each center-distance threshold, their mean, and TP errors at ``tp_dist``.

    ``min_precision=None`` (or 0) gives the plain recall-cropped area without
    the precision floor.
    """
    floor = min_precision or 0.0
    ap, curves = {}, {}
    for d in dist_thresholds:
        acc = accumulate(dets, gts, d)
        curves[d] = acc.interpolated_precision()
        ap[d] = calc_ap(curves[d], min_recall, floor)
    tp_acc = accumulate(dets, gts, tp_dist)

    def mean(xs):
        return float(np.mean(xs)) if xs else math.nan

    return NuscenesReport(
        ap,
        float(np.mean(list(ap.values()))),
        mean(tp_acc.trans_err),
        mean(tp_acc.scale_err),
        mean(tp_acc.orient_err),
        curves,
    )


class NuscenesCarEvaluator(BaseEstimator):
    def __init__(self, dist_thresholds=DIST_THRESHOLDS, tp_dist=TP_DIST, min_recall=MIN_RECALL,
                 min_precision=MIN_PRECISION):
        self.dist_thresholds = dist_thresholds
        self.tp_dist = tp_dist
        self.min_recall = min_recall
        self.min_precision = min_precision

    def evaluate(self, dets, gts) -> NuscenesReport:
        return evaluate_nuscenes_car(
            dets, gts, self.dist_thresholds, self.tp_dist, self.min_recall, self.min_precision
        )
