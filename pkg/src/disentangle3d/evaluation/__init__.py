from .ap import GRIDS, PRCurve, ap_interpolated, pr_curve, recall_grid
from .kitti import (
    DIFFICULTIES,
    Criterion,
    DetectionRecord,
    GroundTruthRecord,
    KittiEvaluator,
    KittiReport,
    assign_difficulty,
    evaluate_kitti,
    match_detections,
)
from .nuscenes import NuscBox, NuscenesCarEvaluator, NuscenesReport, evaluate_nuscenes_car

__all__ = [
    "DIFFICULTIES",
    "GRIDS",
    "Criterion",
    "DetectionRecord",
    "GroundTruthRecord",
    "KittiEvaluator",
    "KittiReport",
    "NuscBox",
    "NuscenesCarEvaluator",
    "NuscenesReport",
    "PRCurve",
    "ap_interpolated",
    "assign_difficulty",
    "evaluate_kitti",
    "evaluate_nuscenes_car",
    "match_detections",
    "pr_curve",
    "recall_grid",
]
