"""Synthetic scenes for demonstrating metric behavior."""

from __future__ import annotations

from ..geometry import Box2D, Box3D
from .kitti import DIFFICULTIES, DetectionRecord, GroundTruthRecord

# (2D height px, occlusion, truncation) that land in exactly one difficulty
DIFFICULTY_EXEMPLARS = {
    "easy": (50.0, 0, 0.0),
    "moderate": (30.0, 1, 0.2),
    "hard": (30.0, 2, 0.4),
}


def _object(label, difficulty):
    height, occ, trunc = DIFFICULTY_EXEMPLARS[difficulty]
    box2d = Box2D(500.0, 150.0, 500.0 + 1.6 * height, 150.0 + height)
    box3d = Box3D.from_yaw((1.0, 1.0, 20.0), (1.6, 1.5, 3.9), 0.3)
    return GroundTruthRecord(label, box2d, box3d, trunc, occ)


def single_detection_scenario(gt_count: int = 100, label: str = "Car"):
    """``gt_count`` objects per difficulty, one image each; exactly one exact,
    score-1 detection per difficulty.  Returns ``(dets_by_image, gts_by_image)``.
    """
    gts, dets = {}, {}
    for difficulty in DIFFICULTIES:
        for i in range(gt_count):
            image = f"{difficulty}_{i:06d}"
            gt = _object(label, difficulty)
            gts[image] = [gt]
            dets[image] = [DetectionRecord(label, gt.box2d, gt.box3d, 1.0)] if i == 0 else []
    return dets, gts
