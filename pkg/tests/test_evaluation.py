import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disentangle3d.evaluation import (
    Criterion,
    DetectionRecord,
    GroundTruthRecord,
    KittiEvaluator,
    NuscBox,
    ap_interpolated,
    assign_difficulty,
    evaluate_kitti,
    evaluate_nuscenes_car,
    match_detections,
    pr_curve,
)
from disentangle3d.evaluation.kitti import FP, IGNORED, TP
from disentangle3d.evaluation.synthetic import single_detection_scenario
from disentangle3d.exceptions import MixedClasses, NoGroundTruth
from disentangle3d.geometry import Box2D, Box3D

from .oracles import random_scene, reference_ap, scene_to_records


def _gt(height=50.0, occ=0, trunc=0.0, label="Car", u=100.0):
    return GroundTruthRecord(label, Box2D(u, 100.0, u + 80.0, 100.0 + height), None, trunc, occ)


def _det(box, score, label="Car"):
    return DetectionRecord(label, box, None, score)


# ---------------------------------------------------------------------------
# difficulty and matching


def test_assign_difficulty_examples():
    assert assign_difficulty(_gt(50, 0, 0.0)) == "easy"
    assert assign_difficulty(_gt(30, 1, 0.2)) == "moderate"
    assert assign_difficulty(_gt(30, 2, 0.45)) == "hard"
    assert assign_difficulty(_gt(10, 0, 0.0)) == "ignored"
    assert assign_difficulty(_gt(50, 3, 0.0)) == "ignored"


def test_single_match_is_tp():
    gt = _gt()
    # 2D IoU (80*45)/(80*50) = 0.9
    det = _det(Box2D(100, 100, 180, 145), 0.9)
    res = match_detections([det], [gt], Criterion("2d", 0.7))
    assert res.status.tolist() == [TP]
    assert res.n_positive == 1


def test_duplicate_detection_is_fp():
    gt = _gt()
    lo, hi = _det(gt.box2d, 0.3), _det(gt.box2d, 0.8)
    res = match_detections([lo, hi], [gt], Criterion("2d", 0.7))
    assert res.status.tolist() == [FP, TP]
    assert res.matched_to.tolist() == [-1, 0]


def test_dontcare_detection_ignored():
    region = Box2D(0, 0, 400, 400)
    det = _det(Box2D(10, 10, 60, 60), 0.9)
    res = match_detections([det], [], Criterion("2d", 0.7), dontcare=[region])
    assert res.status.tolist() == [IGNORED]
    outside = _det(Box2D(500, 10, 560, 60), 0.9)
    assert match_detections([outside], [], Criterion("2d", 0.7), dontcare=[region]).status.tolist() == [FP]


def test_mixed_classes_rejected():
    with pytest.raises(MixedClasses):
        match_detections([_det(Box2D(0, 0, 1, 1), 0.5, "Car")], [_gt(label="Pedestrian")], Criterion("2d", 0.5))


def test_center_distance_criterion():
    box = Box3D.from_yaw((0, 1, 20), (1.6, 1.5, 4), 0.0)
    near = Box3D.from_yaw((1.5, 1, 20), (1.6, 1.5, 4), 0.0)
    gt = GroundTruthRecord("Car", Box2D(0, 0, 50, 50), box)
    det = DetectionRecord("Car", Box2D(0, 0, 50, 50), near, 0.5)
    assert match_detections([det], [gt], Criterion("center_dist", 2.0)).status.tolist() == [TP]
    assert match_detections([det], [gt], Criterion("center_dist", 1.0)).status.tolist() == [FP]


# ---------------------------------------------------------------------------
# interpolated AP


def test_ap_perfect_and_flaw():
    assert ap_interpolated([1.0] * 5, [True] * 5, 5, "R11") == 1.0
    assert ap_interpolated([1.0] * 5, [True] * 5, 5, "R40") == 1.0
    assert ap_interpolated([1.0], [True], 100, "R11") == pytest.approx(1 / 11, abs=1e-15)
    assert ap_interpolated([1.0], [True], 100, "R40") == 0.0
    assert ap_interpolated([], [], 3, "R11") == 0.0


def test_ap_requires_ground_truth():
    with pytest.raises(NoGroundTruth):
        pr_curve([0.5], [True], 0)
    with pytest.raises(ValueError):
        pr_curve([0.5], [True], 1, "R7")


flags = st.lists(st.tuples(st.integers(0, 100).map(lambda k: k / 100), st.booleans()), max_size=40)


@settings(max_examples=200, deadline=None)
@given(flags, st.integers(1, 60), st.sampled_from(["R11", "R40"]))
def test_interpolated_precision_invariants(dets, extra, grid):
    scores = [s for s, _ in dets]
    is_tp = [t for _, t in dets]
    n_gt = sum(is_tp) + extra
    curve = pr_curve(scores, is_tp, n_gt, grid)
    p = curve.interpolated
    assert np.all(np.diff(p) <= 0)
    assert np.all((0 <= p) & (p <= 1))
    assert 0.0 <= curve.ap <= 1.0


@settings(max_examples=100, deadline=None)
@given(flags, st.integers(1, 30))
def test_ap_invariant_under_monotone_rescaling(dets, extra):
    scores = np.array([s for s, _ in dets])
    is_tp = [t for _, t in dets]
    n_gt = sum(is_tp) + extra
    for grid in ("R11", "R40"):
        assert ap_interpolated(np.exp(3 * scores) - 5, is_tp, n_gt, grid) == ap_interpolated(scores, is_tp, n_gt, grid)


# ---------------------------------------------------------------------------
# full evaluation


def test_flaw_scenario():
    dets, gts = single_detection_scenario(100)
    rep = evaluate_kitti(dets, gts, "Car", criteria=("2d", "3d"))
    for diff in ("easy", "moderate", "hard"):
        assert rep.ap("3d", diff, "R11") == pytest.approx(1 / 11, abs=1e-12)
        assert rep.ap("3d", diff, "R40") == 0.0


def test_empty_and_perfect_detections():
    _, gts = single_detection_scenario(5)
    rep = evaluate_kitti({}, gts, "Car")
    assert all(v == 0 for per in rep.results.values() for g in per.values() for v in g.values())
    perfect = {k: [DetectionRecord("Car", g.box2d, g.box3d, 1.0) for g in v] for k, v in gts.items()}
    rep = evaluate_kitti(perfect, gts, "Car")
    assert all(v == 1 for per in rep.results.values() for g in per.values() for v in g.values())


def test_class_without_ground_truth_propagates():
    dets, gts = single_detection_scenario(2)
    with pytest.raises(NoGroundTruth):
        evaluate_kitti(dets, gts, "Cyclist")


def test_unknown_detection_images_rejected():
    _, gts = single_detection_scenario(2)
    with pytest.raises(KeyError):
        evaluate_kitti({"nope": []}, gts)


@pytest.mark.parametrize("seed", range(10))
def test_matches_reference_evaluator(seed):
    rng = np.random.default_rng(seed)
    scene = random_scene(rng, n_images=4)
    dets, gts = scene_to_records(scene)
    tau = 0.5
    rep = evaluate_kitti(dets, gts, "Car", {d: tau for d in ("easy", "moderate", "hard")})
    for task in ("2d", "bev", "3d"):
        for diff in ("easy", "moderate", "hard"):
            for grid in ("R11", "R40"):
                assert rep.ap(task, diff, grid) == reference_ap(scene, "Car", task, diff, tau, grid)


def test_evaluator_estimator_params():
    ev = KittiEvaluator("Car", iou_threshold=0.5, criteria=("2d",), grids=("R40",), min_score=0.5)
    assert ev.get_params()["iou_threshold"] == 0.5
    dets, gts = single_detection_scenario(3)
    rep = ev.evaluate(dets, gts)
    assert set(rep.results) == {"2d"}
    assert set(rep.results["2d"]["easy"]) == {"R40"}
    low = {k: [DetectionRecord(d.label, d.box2d, d.box3d, 0.1) for d in v] for k, v in dets.items()}
    assert ev.evaluate(low, gts).ap("2d", "easy", "R40") == 0.0
    with pytest.raises(ValueError):
        KittiEvaluator(grids=("R7",)).evaluate(dets, gts)


# ---------------------------------------------------------------------------
# nuScenes


def _nusc_scene(offset=(0.0, 0.0), yaw_err=0.0, n=20):
    gts, dets = [], []
    for i in range(n):
        c = (3.0 * i, 10.0 + i, 1.0)
        gts.append(NuscBox(f"s{i % 4}", c, (1.9, 4.5, 1.6), 0.1 * i))
        dets.append(NuscBox(f"s{i % 4}", (c[0] + offset[0], c[1] + offset[1], c[2]), (1.9, 4.5, 1.6), 0.1 * i + yaw_err, 1 - i / 100))
    return dets, gts


def test_nuscenes_perfect():
    rep = evaluate_nuscenes_car(*_nusc_scene())
    assert all(v == pytest.approx(1.0, abs=1e-12) for v in rep.ap.values())
    assert rep.ate == rep.ase == rep.aoe == 0.0


def test_nuscenes_offset():
    rep = evaluate_nuscenes_car(*_nusc_scene(offset=(0.9, 1.2)))
    assert rep.ap[0.5] == 0 and rep.ap[1.0] == 0
    assert rep.ap[2.0] == pytest.approx(1.0) and rep.ap[4.0] == pytest.approx(1.0)
    assert rep.ate == pytest.approx(1.5, abs=1e-9)


def test_nuscenes_yaw_error():
    rep = evaluate_nuscenes_car(*_nusc_scene(yaw_err=math.pi / 4))
    assert rep.aoe == pytest.approx(math.pi / 4, abs=1e-12)


def test_nuscenes_no_tp_gives_none_in_json():
    dets, gts = _nusc_scene(offset=(50.0, 0.0))
    out = evaluate_nuscenes_car(dets, gts).to_dict()
    assert out["ATE"] is None and out["mAP"] == 0
