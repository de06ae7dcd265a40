"""KITTI-style detection evaluation on 2D, bird's-eye-view and 3D boxes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, NamedTuple, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ..exceptions import MixedClasses
from ..geometry import Box2D, Box3D, bev_iou, iou_2d, iou_3d
from .ap import GRIDS, PRCurve, pr_curve

DIFFICULTIES = ("easy", "moderate", "hard")

# Thresholds of the official KITTI object devkit (cpp/evaluate_object.cpp:
# MIN_HEIGHT, MAX_OCCLUSION, MAX_TRUNCATION).
MIN_HEIGHT = {"easy": 40.0, "moderate": 25.0, "hard": 25.0}
MAX_OCCLUSION = {"easy": 0, "moderate": 1, "hard": 2}
MAX_TRUNCATION = {"easy": 0.15, "moderate": 0.30, "hard": 0.50}

# GTs of a neighboring class are ignored rather than counted as misses.
NEIGHBOR_CLASSES = {"car": ("van",), "pedestrian": ("person_sitting",)}

DEFAULT_IOU = {"car": 0.7, "pedestrian": 0.5, "cyclist": 0.5}

CRITERIA = ("2d", "bev", "3d")


@dataclass(frozen=True)
class GroundTruthRecord:
    label: str
    box2d: Box2D
    box3d: Optional[Box3D] = None
    truncation: float = 0.0
    occlusion: int = 0
    dontcare: bool = False

    @property
    def height(self) -> float:
        return self.box2d.height


@dataclass(frozen=True)
class DetectionRecord:
    label: str
    box2d: Box2D
    box3d: Optional[Box3D]
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("detection score must be finite")


class Criterion(NamedTuple):
    """Matching rule: IoU kinds need overlap >= threshold; ``center_dist``
    needs ground-plane center distance <= threshold (meters)."""

    kind: str  # "2d", "bev", "3d", "center_dist"
    threshold: float

    @property
    def bound(self) -> float:
        return -self.threshold if self.kind == "center_dist" else self.threshold

    def overlap(self, det: DetectionRecord, gt: GroundTruthRecord) -> float:
        """Similarity where larger is better (negated distance for ``center_dist``)."""
        if self.kind == "center_dist":
            a, b = det.box3d.center, gt.box3d.center
            return -float(np.hypot(a[0] - b[0], a[2] - b[2]))
        if self.kind == "2d":
            return iou_2d(det.box2d, gt.box2d)
        if self.kind == "bev":
            return bev_iou(det.box3d, gt.box3d)
        if self.kind == "3d":
            return iou_3d(det.box3d, gt.box3d)
        raise ValueError(f"unknown criterion {self.kind!r}")


def satisfies(gt: GroundTruthRecord, difficulty: str) -> bool:
    return (
        gt.height >= MIN_HEIGHT[difficulty]
        and gt.occlusion <= MAX_OCCLUSION[difficulty]
        and gt.truncation <= MAX_TRUNCATION[difficulty]
    )


def assign_difficulty(gt: GroundTruthRecord) -> str:
    """Strictest difficulty the object qualifies for, or ``"ignored"``."""
    for d in DIFFICULTIES:
        if satisfies(gt, d):
            return d
    return "ignored"


TP, FP, IGNORED = 1, 0, -1


@dataclass
class MatchResult:
    status: np.ndarray  # per detection: TP, FP or IGNORED
    gt_matched: np.ndarray  # per ground truth: bool
    matched_to: np.ndarray  # per detection: gt index or -1
    n_positive: int  # non-ignored GTs not consumed by an ignored detection

    def scored(self, scores):
        """(scores, is_tp) restricted to counted detections."""
        keep = self.status != IGNORED
        return np.asarray(scores, dtype=float)[keep], self.status[keep] == TP


def _dontcare_overlap(box: Box2D, region: Box2D) -> float:
    iw = min(box.u2, region.u2) - max(box.u1, region.u1)
    ih = min(box.v2, region.v2) - max(box.v1, region.v1)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih / box.area


def match_detections(
    dets: Sequence[DetectionRecord],
    gts: Sequence[GroundTruthRecord],
    criterion: Criterion,
    gt_ignored: Optional[Sequence[bool]] = None,
    det_ignored: Optional[Sequence[bool]] = None,
    dontcare: Sequence[Box2D] = (),
) -> MatchResult:
    """Greedy matching of one image's detections in descending score order.

    Each detection takes the unmatched ground truth of highest overlap at or
    above the threshold, preferring counted over ignored ground truths.
    Detections that land on an ignored ground truth, that are flagged ignored,
    or that lie inside a dontcare region (fraction of their 2D area >=
    threshold) are neither true nor false positives.
    """
    gt_ignored = np.zeros(len(gts), bool) if gt_ignored is None else np.asarray(gt_ignored, bool)
    det_ignored = np.zeros(len(dets), bool) if det_ignored is None else np.asarray(det_ignored, bool)
    labels = {d.label.lower() for d in dets} | {g.label.lower() for g, ig in zip(gts, gt_ignored) if not ig}
    if len(labels) > 1:
        raise MixedClasses(f"expected a single class, got {sorted(labels)}")

    status = np.full(len(dets), FP, dtype=int)
    matched_to = np.full(len(dets), -1, dtype=int)
    taken = np.zeros(len(gts), bool)
    consumed = 0
    order = np.argsort(-np.array([d.score for d in dets], dtype=float), kind="stable")
    for di in order:
        det = dets[di]
        best = {False: (-1, -np.inf), True: (-1, -np.inf)}
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            ov = criterion.overlap(det, gt)
            if ov >= criterion.bound and ov > best[bool(gt_ignored[gi])][1]:
                best[bool(gt_ignored[gi])] = (gi, ov)
        gi = best[False][0] if best[False][0] >= 0 else best[True][0]
        if gi >= 0:
            taken[gi] = True
            matched_to[di] = gi
            if gt_ignored[gi] or det_ignored[di]:
                status[di] = IGNORED
                consumed += int(not gt_ignored[gi])
            else:
                status[di] = TP
        elif det_ignored[di] or (
            criterion.kind != "center_dist"
            and any(_dontcare_overlap(det.box2d, r) >= criterion.threshold for r in dontcare)
        ):
            status[di] = IGNORED
    n_pos = int((~gt_ignored).sum()) - consumed
    return MatchResult(status, taken, matched_to, n_pos)


def _gt_ignore_flags(gts, class_name, difficulty):
    cls = class_name.lower()
    neighbors = NEIGHBOR_CLASSES.get(cls, ())
    kept, flags = [], []
    for gt in gts:
        label = gt.label.lower()
        if gt.dontcare:
            continue
        if label == cls:
            kept.append(gt)
            flags.append(not satisfies(gt, difficulty))
        elif label in neighbors:
            kept.append(gt)
            flags.append(True)
    return kept, flags


@dataclass
class KittiReport:
    class_name: str
    thresholds: Dict[str, float]
    results: dict = field(default_factory=dict)  # task -> difficulty -> grid -> AP
    curves: dict = field(default_factory=dict)  # task -> difficulty -> grid -> PRCurve

    def ap(self, task, difficulty, grid):
        return self.results[task][difficulty][grid]

    def to_dict(self, include_curves=True):
        out = {"class": self.class_name, "iou_thresholds": dict(self.thresholds), "results": self.results}
        if include_curves:
            out["curves"] = {
                t: {d: {g: c.to_dict() for g, c in per.items()} for d, per in diffs.items()}
                for t, diffs in self.curves.items()
            }
        return out


def evaluate_kitti(
    dets_by_image: Mapping[str, Sequence[DetectionRecord]],
    gts_by_image: Mapping[str, Sequence[GroundTruthRecord]],
    class_name: str = "Car",
    iou_thresholds: Optional[Mapping[str, float]] = None,
    criteria: Sequence[str] = CRITERIA,
    grids: Sequence[str] = ("R11", "R40"),
) -> KittiReport:
    """AP per task x difficulty x recall grid for one class."""
    unknown = set(dets_by_image) - set(gts_by_image)
    if unknown:
        raise KeyError(f"detections for images without ground truth: {sorted(unknown)[:5]}")
    if iou_thresholds is None:
        tau = DEFAULT_IOU.get(class_name.lower(), 0.5)
        iou_thresholds = {d: tau for d in DIFFICULTIES}
    cls = class_name.lower()
    report = KittiReport(class_name, dict(iou_thresholds))
    for task in criteria:
        report.results[task], report.curves[task] = {}, {}
        for difficulty in DIFFICULTIES:
            crit = Criterion(task, iou_thresholds[difficulty])
            scores, flags, n_pos = [], [], 0
            for image in sorted(gts_by_image):
                gts, gt_ign = _gt_ignore_flags(gts_by_image[image], class_name, difficulty)
                dontcare = [g.box2d for g in gts_by_image[image] if g.dontcare]
                dets = [d for d in dets_by_image.get(image, ()) if d.label.lower() == cls]
                det_ign = [d.box2d.height < MIN_HEIGHT[difficulty] for d in dets]
                res = match_detections(dets, gts, crit, gt_ign, det_ign, dontcare)
                s, f = res.scored([d.score for d in dets])
                scores.append(s)
                flags.append(f)
                n_pos += res.n_positive
            scores = np.concatenate(scores) if scores else np.zeros(0)
            flags = np.concatenate(flags) if flags else np.zeros(0, bool)
            report.results[task][difficulty] = {}
            report.curves[task][difficulty] = {}
            for grid in grids:
                curve = pr_curve(scores, flags, n_pos, grid)
                report.curves[task][difficulty][grid.upper()] = curve
                report.results[task][difficulty][grid.upper()] = curve.ap
    return report


class KittiEvaluator(BaseEstimator):
    """Configured, reusable KITTI evaluator; ``evaluate`` returns a :class:`KittiReport`."""

    def __init__(self, class_name="Car", iou_threshold=None, criteria=CRITERIA, grids=("R11", "R40"), min_score=None):
        self.class_name = class_name
        self.iou_threshold = iou_threshold
        self.criteria = criteria
        self.grids = grids
        self.min_score = min_score

    def evaluate(self, dets_by_image, gts_by_image) -> KittiReport:
        for g in self.grids:
            if g.upper() not in GRIDS:
                raise ValueError(f"unknown grid {g!r}")
        thresholds = None
        if self.iou_threshold is not None:
            thresholds = {d: float(self.iou_threshold) for d in DIFFICULTIES}
        if self.min_score is not None:
            dets_by_image = {k: [d for d in v if d.score >= self.min_score] for k, v in dets_by_image.items()}
        return evaluate_kitti(dets_by_image, gts_by_image, self.class_name, thresholds, self.criteria, self.grids)


__all__ = [
    "DIFFICULTIES",
    "Criterion",
    "DetectionRecord",
    "GroundTruthRecord",
    "KittiEvaluator",
    "KittiReport",
    "MatchResult",
    "PRCurve",
    "assign_difficulty",
    "evaluate_kitti",
    "match_detections",
    "satisfies",
]
