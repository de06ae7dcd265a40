import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disentangle3d.exceptions import BehindCamera, DegenerateBox, InvalidBox, NonPositiveDepth, NonYawBox, ZeroArea
from disentangle3d.geometry import (
    Box2D,
    Box3D,
    BoxContext,
    Intrinsics,
    Quaternion,
    Theta10,
    bev_iou,
    box3d_yaw,
    clip_convex,
    decode_theta,
    inverse_lift,
    iou_2d,
    iou_3d,
    lift,
    polygon_area,
    siou,
)
from disentangle3d.grad import default_context, sample_theta

from .oracles import cuboid_corners, mc_iou_3d, mc_iou_bev, yaw_rotation

coord = st.floats(-100, 100, allow_nan=False)
extent = st.floats(0.01, 50, allow_nan=False)


@st.composite
def boxes2d(draw):
    u, v, w, h = draw(coord), draw(coord), draw(extent), draw(extent)
    return Box2D(u, v, u + w, v + h)


def principal_ctx():
    K = Intrinsics(700.0, 700.0, 600.0, 180.0)
    return BoxContext(Box2D(590.0, 170.0, 610.0, 190.0), K)


# ---------------------------------------------------------------------------
# 2D


def test_iou_2d_examples():
    a = Box2D(0, 0, 2, 2)
    assert iou_2d(a, a) == 1.0
    assert iou_2d(a, Box2D(1, 0, 3, 2)) == pytest.approx(1 / 3, abs=1e-15)
    assert iou_2d(a, Box2D(5, 5, 6, 6)) == 0.0


def test_siou_examples():
    assert siou(Box2D(0, 0, 1, 1), Box2D(0, 0, 1, 1)) == 1.0
    assert siou(Box2D(0, 0, 1, 1), Box2D(2, 2, 3, 3)) == -1 / 3
    assert siou(Box2D(0, 0, 2, 2), Box2D(1, 0, 3, 2)) == 1 / 3


def test_invalid_2d_boxes_raise():
    with pytest.raises(InvalidBox):
        iou_2d(Box2D(2, 0, 0, 2), Box2D(0, 0, 1, 1))
    with pytest.raises(ZeroArea):
        iou_2d(Box2D(0, 0, 0, 2), Box2D(0, 0, 1, 1))


@settings(max_examples=300, deadline=None)
@given(boxes2d(), boxes2d())
def test_siou_properties(a, b):
    s = siou(a, b)
    assert -1.0 <= s <= 1.0
    assert siou(b, a) == pytest.approx(s, abs=1e-12)
    i = iou_2d(a, b)
    assert 0.0 <= i <= 1.0
    if i > 0:
        assert s == pytest.approx(i, abs=1e-12)


# ---------------------------------------------------------------------------
# quaternions


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda q: np.linalg.norm(q) > 0.1))
def test_quaternion_matrix_round_trip(q):
    q = Quaternion(*q).normalized()
    R = q.rotation_matrix()
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)
    back = Quaternion.from_matrix(R)
    assert np.allclose(back.rotation_matrix(), R, atol=1e-12)


def test_from_yaw_matches_y_rotation():
    for angle in (0.3, -1.2, 2.9):
        assert np.allclose(Quaternion.from_yaw(angle).rotation_matrix(), yaw_rotation(angle), atol=1e-15)


# ---------------------------------------------------------------------------
# lifting


def test_decode_reference_values():
    ctx = default_context()
    theta = Theta10(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, Quaternion.identity(), ctx)
    dec = decode_theta(theta)
    assert dec.z == 28.01
    assert dec.s == pytest.approx((1.53, 1.63, 3.88), abs=1e-15)


def test_decode_principal_point_gives_optical_axis():
    ctx = principal_ctx()
    for dz in (-1.0, 0.0, 2.0):
        dec = decode_theta(Theta10(dz, 0.0, 0.0, 0, 0, 0, Quaternion.identity(), ctx))
        assert dec.C[0] == 0 and dec.C[1] == 0
        assert dec.C[2] == pytest.approx(28.01 + 16.32 * dz)
        assert dec.beta == 0


def test_lift_identity_box():
    ctx = principal_ctx()
    stats = ctx.depth_stats
    # s = (2, 2, 2) and z = 10
    theta = Theta10(
        (10 - stats.mean) / stats.std,
        0.0,
        0.0,
        math.log(2 / 1.53),
        math.log(2 / 1.63),
        math.log(2 / 3.88),
        Quaternion.identity(),
        ctx,
    )
    expected = cuboid_corners((0, 0, 10), (2, 2, 2), np.eye(3))
    assert np.allclose(lift(theta).corners, expected, atol=1e-12)


def test_lift_off_center_matches_independent_composition():
    ctx = principal_ctx()
    K = ctx.intrinsics
    ub, vb = ctx.anchor2d.center
    # uc - cx = fx puts the center at x = z
    theta = Theta10(
        (10 - 28.01) / 16.32, K.cx + K.fx - ub, 5.0, 0.1, -0.2, 0.05, Quaternion.identity(), ctx
    )
    dec = decode_theta(theta)
    assert dec.beta == pytest.approx(math.pi / 4, abs=1e-15)
    size = (1.53 * math.exp(0.1), 1.63 * math.exp(-0.2), 3.88 * math.exp(0.05))
    cy = 5.0 / K.fy * 10
    expected = cuboid_corners((10.0, cy, 10.0), size, yaw_rotation(math.pi / 4))
    assert np.abs(lift(theta).corners - expected).max() < 1e-12


def test_lift_rejects_nonpositive_depth():
    ctx = default_context()
    with pytest.raises(NonPositiveDepth):
        lift(Theta10(-28.01 / 16.32 - 0.1, 0, 0, 0, 0, 0, Quaternion.identity(), ctx))


def test_inverse_lift_axis_aligned():
    ctx = principal_ctx()
    box = Box3D.from_yaw((0.0, 0.0, 10.0), (1.53, 1.63, 3.88), 0.0)
    th = inverse_lift(box, ctx)
    assert th.delta_z == pytest.approx((10 - 28.01) / 16.32, abs=1e-12)
    assert th.delta_u == pytest.approx(600.0 - 600.0, abs=1e-9)
    assert th.delta_v == pytest.approx(180.0 - 180.0, abs=1e-9)
    assert max(abs(th.delta_W), abs(th.delta_H), abs(th.delta_D)) < 1e-12
    assert np.allclose(th.q.as_tuple(), (1, 0, 0, 0), atol=1e-12)


def test_inverse_lift_behind_camera():
    box = Box3D.from_yaw((0.0, 0.0, -5.0), (1, 1, 1), 0.0)
    with pytest.raises(BehindCamera):
        inverse_lift(box, default_context())


def test_non_cuboid_rejected():
    corners = cuboid_corners((0, 0, 10), (1, 2, 3), np.eye(3))
    corners[0, 0] += 0.3
    with pytest.raises(DegenerateBox):
        Box3D(corners).pose()


@pytest.mark.parametrize("seed", range(5))
def test_inverse_lift_recovers_theta(seed):
    rng = np.random.default_rng(seed)
    ctx = default_context()
    for _ in range(200):
        theta = sample_theta(rng, ctx)
        back = inverse_lift(lift(theta), ctx)
        a, b = theta.as_array(), back.as_array()
        assert np.abs(a[:6] - b[:6]).max() < 1e-7
        q = a[6:] / np.linalg.norm(a[6:])
        assert min(np.abs(q - b[6:]).max(), np.abs(q + b[6:]).max()) < 1e-7


# ---------------------------------------------------------------------------
# rotated IoU


def test_polygon_area_and_clip():
    sq = [(0, 0), (2, 0), (2, 2), (0, 2)]
    assert polygon_area(sq) == 4.0
    clipped = clip_convex(sq, [(1, 1), (3, 1), (3, 3), (1, 3)])
    assert polygon_area(clipped) == pytest.approx(1.0)
    assert polygon_area(clip_convex(sq, [(5, 5), (6, 5), (6, 6), (5, 6)])) == 0.0


def test_rotated_iou_trivial_cases():
    a = Box3D.from_yaw((1, 0.5, 12), (1.6, 1.5, 3.9), 0.4)
    assert bev_iou(a, a) == pytest.approx(1.0, abs=1e-12)
    assert iou_3d(a, a) == pytest.approx(1.0, abs=1e-12)
    sq = Box3D.from_yaw((0, 0, 10), (2, 1, 2), 0.0)
    turned = Box3D.from_yaw((0, 0, 10), (2, 1, 2), math.pi / 2)
    assert bev_iou(sq, turned) == pytest.approx(1.0, abs=1e-12)
    high = Box3D.from_yaw((0, -3, 10), (2, 1, 2), 0.0)
    assert iou_3d(sq, high) == 0.0
    assert bev_iou(sq, high) == pytest.approx(1.0, abs=1e-12)


def test_bev_iou_45_degrees(rng):
    a = Box3D.from_yaw((0, 0, 10), (1, 1, 1), 0.0)
    b = Box3D.from_yaw((0, 0, 10), (1, 1, 1), math.pi / 4)
    expected = (2 * math.sqrt(2) - 2) / (4 - 2 * math.sqrt(2))
    assert bev_iou(a, b) == pytest.approx(expected, abs=1e-12)
    oracle = mc_iou_bev(((0, 0, 10), (1, 1, 1), 0.0), ((0, 0, 10), (1, 1, 1), math.pi / 4), 1_000_000, rng)
    assert abs(bev_iou(a, b) - oracle) < 1e-3


def test_rotated_iou_against_monte_carlo_small(rng):
    for _ in range(5):
        a = ((0.0, 0.0, 20.0), tuple(rng.uniform(1, 4, 3)), rng.uniform(-math.pi, math.pi))
        b = (tuple(np.array(a[0]) + rng.uniform(-1, 1, 3)), tuple(rng.uniform(1, 4, 3)), rng.uniform(-math.pi, math.pi))
        ba, bb = Box3D.from_yaw(*a), Box3D.from_yaw(*b)
        assert abs(iou_3d(ba, bb) - mc_iou_3d(a, b, 400_000, rng)) < 4e-3
        assert abs(bev_iou(ba, bb) - mc_iou_bev(a, b, 400_000, rng)) < 4e-3


def test_tilted_box_rejected():
    R = Quaternion(math.cos(0.2), math.sin(0.2), 0, 0).rotation_matrix()
    tilted = Box3D.from_pose((0, 0, 10), (1, 1, 1), R)
    with pytest.raises(NonYawBox):
        bev_iou(tilted, tilted)


@settings(max_examples=60, deadline=None)
@given(
    st.tuples(st.floats(-3, 3), st.floats(-1, 1), st.floats(5, 30)),
    st.tuples(st.floats(0.3, 5), st.floats(0.3, 5), st.floats(0.3, 5)),
    st.floats(-math.pi, math.pi),
    st.tuples(st.floats(-2, 2), st.floats(-1, 1), st.floats(-2, 2)),
    st.tuples(st.floats(0.3, 5), st.floats(0.3, 5), st.floats(0.3, 5)),
    st.floats(-math.pi, math.pi),
)
def test_rotated_iou_properties(c, s, yaw, dc, s2, yaw2):
    a = Box3D.from_yaw(c, s, yaw)
    b = Box3D.from_yaw(tuple(np.add(c, dc)), s2, yaw2)
    for fn in (bev_iou, iou_3d):
        v = fn(a, b)
        assert 0.0 <= v <= 1.0 + 1e-12
        assert fn(b, a) == pytest.approx(v, abs=1e-9)


def test_box3d_yaw_round_trip():
    box = Box3D.from_yaw((1.0, 2.0, 30.0), (1.5, 1.6, 4.0), 0.7)
    C, size, yaw = box3d_yaw(box)
    assert np.allclose(C, (1, 2, 30)) and np.allclose(size, (1.5, 1.6, 4.0))
    assert yaw == pytest.approx(0.7)
