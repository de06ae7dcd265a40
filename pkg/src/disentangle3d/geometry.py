"""Box representations, quaternions, the 3D lifting transformation and IoUs.

Coordinates follow the KITTI camera frame: x right, y down (gravity), z
forward.  Scalar code paths accept :class:`~disentangle3d.autodiff.Dual`
values wherever a decoded quantity may need derivatives (decoding, lifting,
signed IoU); inverse lifting and the rotated IoUs are float-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .exceptions import (
    BehindCamera,
    DegenerateBox,
    GeometryError,
    InvalidBox,
    NonPositiveDepth,
    NonYawBox,
    ZeroArea,
)

# Columns enumerate the corners of [-1, 1]^3 as (x, y, z) sign patterns
# ---, +--, ++-, -+-, --+, +-+, +++, -++.
CANONICAL_CORNERS = np.array(
    [
        [-1, 1, 1, -1, -1, 1, 1, -1],
        [-1, -1, 1, 1, -1, -1, 1, 1],
        [-1, -1, -1, -1, 1, 1, 1, 1],
    ],
    dtype=float,
)

# Reference values for the KITTI Car class.
KITTI_CAR_SIZE = (1.53, 1.63, 3.88)
KITTI_DEPTH_STATS = (28.01, 16.32)

CLIP_EPS = 1e-9
AREA_EPS = 1e-12
YAW_TOL = 1e-6
QUAT_NORM_EPS = 1e-9


class DegenerateQuaternion(GeometryError):
    pass


# ---------------------------------------------------------------------------
# 2D boxes


@dataclass(frozen=True)
class Box2D:
    """Image-plane rectangle given by two corners (u1, v1) and (u2, v2)."""

    u1: float
    v1: float
    u2: float
    v2: float

    @classmethod
    def from_center(cls, uc, vc, w, h):
        return cls(uc - w / 2, vc - h / 2, uc + w / 2, vc + h / 2)

    @property
    def width(self):
        return self.u2 - self.u1

    @property
    def height(self):
        return self.v2 - self.v1

    @property
    def center(self):
        return ((self.u1 + self.u2) / 2, (self.v1 + self.v2) / 2)

    @property
    def area(self):
        """Unsigned area |(u2 - u1)(v2 - v1)|."""
        return abs(self.width * self.height)

    @property
    def signed_area(self):
        a = self.area
        return a if (self.u2 > self.u1 and self.v2 > self.v1) else -a

    @property
    def is_valid(self):
        return self.u2 > self.u1 and self.v2 > self.v1

    def as_tuple(self):
        return (self.u1, self.v1, self.u2, self.v2)


def extended_intersection(a: Box2D, b: Box2D) -> Box2D:
    """Corner-wise intersection; inverted when the boxes are disjoint."""
    return Box2D(
        ad.maximum(a.u1, b.u1),
        ad.maximum(a.v1, b.v1),
        ad.minimum(a.u2, b.u2),
        ad.minimum(a.v2, b.v2),
    )


def _check_valid(*boxes):
    for box in boxes:
        if not (box.u2 >= box.u1 and box.v2 >= box.v1):
            raise InvalidBox(f"corners of {box} are not ordered top-left/bottom-right")


def iou_2d(a: Box2D, b: Box2D) -> float:
    _check_valid(a, b)
    if ad.value_of(a.area) <= 0 or ad.value_of(b.area) <= 0:
        raise ZeroArea("IoU undefined for a zero-area box")
    iw = min(a.u2, b.u2) - max(a.u1, b.u1)
    ih = min(a.v2, b.v2) - max(a.v1, b.v1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def siou(a: Box2D, b: Box2D):
    """Signed IoU in [-1, 1]; negative for disjoint boxes."""
    _check_valid(a, b)
    inter = extended_intersection(a, b).signed_area
    denom = a.area + b.area - inter
    if ad.value_of(denom) == 0:
        raise ZeroArea("signed IoU denominator vanished")
    return inter / denom


# ---------------------------------------------------------------------------
# quaternions


@dataclass(frozen=True)
class Quaternion:
    qr: float = 1.0
    qi: float = 0.0
    qj: float = 0.0
    qk: float = 0.0

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_yaw(cls, angle):
        """Rotation by ``angle`` about the camera y-axis."""
        return cls(ad.cos(angle / 2), 0.0, ad.sin(angle / 2), 0.0)

    @classmethod
    def from_matrix(cls, R) -> "Quaternion":
        R = np.asarray(R, dtype=float)
        tr = R[0, 0] + R[1, 1] + R[2, 2]
        if tr > 0:
            s = 2.0 * math.sqrt(1.0 + tr)
            q = (0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s)
        elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
            s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
            q = ((R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s)
        elif R[1, 1] > R[2, 2]:
            s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
            q = ((R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s)
        else:
            s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
            q = ((R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s)
        return cls(*q).normalized()

    def __mul__(self, o: "Quaternion") -> "Quaternion":
        a, b, c, d = self.as_tuple()
        e, f, g, h = o.as_tuple()
        return Quaternion(
            a * e - b * f - c * g - d * h,
            a * f + b * e + c * h - d * g,
            a * g - b * h + c * e + d * f,
            a * h + b * g - c * f + d * e,
        )

    def __neg__(self):
        return Quaternion(-self.qr, -self.qi, -self.qj, -self.qk)

    def conjugate(self):
        return Quaternion(self.qr, -self.qi, -self.qj, -self.qk)

    def as_tuple(self):
        return (self.qr, self.qi, self.qj, self.qk)

    def norm(self):
        return ad.sqrt(self.qr * self.qr + self.qi * self.qi + self.qj * self.qj + self.qk * self.qk)

    def normalized(self) -> "Quaternion":
        sq = self.qr * self.qr + self.qi * self.qi + self.qj * self.qj + self.qk * self.qk
        if math.sqrt(ad.value_of(sq)) < QUAT_NORM_EPS:
            raise DegenerateQuaternion("quaternion norm below 1e-9")
        n = ad.sqrt(sq)
        return Quaternion(self.qr / n, self.qi / n, self.qj / n, self.qk / n)

    def canonical(self) -> "Quaternion":
        """Representative of {q, -q} with qr >= 0 (first nonzero positive on ties)."""
        for c in self.as_tuple():
            v = ad.value_of(c)
            if v != 0:
                return self if v > 0 else -self
        return self

    def to_matrix(self):
        """Rotation matrix as nested lists (works for float or dual entries)."""
        w, x, y, z = self.as_tuple()
        return [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]

    def rotation_matrix(self) -> np.ndarray:
        return np.array(self.normalized().to_matrix(), dtype=float)


def yaw_matrix(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


# ---------------------------------------------------------------------------
# camera and parametrization


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project(self, point):
        x, y, z = point
        return (self.fx * x / z + self.cx, self.fy * y / z + self.cy)

    def backproject(self, u, v, z):
        return ((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z)


class DepthStats(NamedTuple):
    mean: float = KITTI_DEPTH_STATS[0]
    std: float = KITTI_DEPTH_STATS[1]


class RefSize(NamedTuple):
    W: float = KITTI_CAR_SIZE[0]
    H: float = KITTI_CAR_SIZE[1]
    D: float = KITTI_CAR_SIZE[2]


@dataclass(frozen=True)
class BoxContext:
    """Non-regressed quantities needed to decode a 10-tuple."""

    anchor2d: Box2D
    intrinsics: Intrinsics
    depth_stats: DepthStats = DepthStats()
    ref_size: RefSize = RefSize()


THETA_NAMES = ("delta_z", "delta_u", "delta_v", "delta_W", "delta_H", "delta_D", "qr", "qi", "qj", "qk")


@dataclass(frozen=True)
class Theta10:
    delta_z: float
    delta_u: float
    delta_v: float
    delta_W: float
    delta_H: float
    delta_D: float
    q: Quaternion
    context: BoxContext = field(compare=True)

    def vector(self):
        return [self.delta_z, self.delta_u, self.delta_v, self.delta_W, self.delta_H, self.delta_D, *self.q.as_tuple()]

    def as_array(self) -> np.ndarray:
        return np.array([ad.value_of(x) for x in self.vector()], dtype=float)

    @classmethod
    def from_vector(cls, values, context: BoxContext) -> "Theta10":
        v = list(values)
        if len(v) != 10:
            raise ValueError(f"expected 10 parameters, got {len(v)}")
        return cls(*v[:6], Quaternion(*v[6:]), context)

    def with_vector(self, values) -> "Theta10":
        return Theta10.from_vector(values, self.context)


@dataclass(frozen=True)
class DecodedBox:
    z: float
    c: tuple
    s: tuple
    q_allocentric: Quaternion
    C: tuple
    beta: float
    q_egocentric: Quaternion


def decode_theta(theta: Theta10) -> DecodedBox:
    ctx = theta.context
    ub, vb = ctx.anchor2d.center
    K = ctx.intrinsics
    z = ctx.depth_stats.mean + ctx.depth_stats.std * theta.delta_z
    uc = ub + theta.delta_u
    vc = vb + theta.delta_v
    s = (
        ctx.ref_size.W * ad.exp(theta.delta_W),
        ctx.ref_size.H * ad.exp(theta.delta_H),
        ctx.ref_size.D * ad.exp(theta.delta_D),
    )
    C = ((uc - K.cx) / K.fx * z, (vc - K.cy) / K.fy * z, z)
    if ad.value_of(C[0]) == 0 and ad.value_of(C[2]) == 0:
        beta = 0.0 * C[0]
    else:
        beta = ad.atan2(C[0], C[2])
    q_ego = theta.q.normalized() * Quaternion.from_yaw(beta)
    return DecodedBox(z, (uc, vc), s, theta.q, C, beta, q_ego)


def _corner_array(rows):
    if any(ad.is_dual(x) for row in rows for x in row):
        return np.array(rows, dtype=object)
    return np.array(rows, dtype=float)


def corners_from_pose(C, s, R):
    """½·R·diag(s)·B0 + C for a 3x3 nested-list rotation R."""
    half = [0.5 * s[0], 0.5 * s[1], 0.5 * s[2]]
    cols = []
    for k in range(8):
        sx, sy, sz = CANONICAL_CORNERS[:, k]
        p = (sx * half[0], sy * half[1], sz * half[2])
        cols.append([R[r][0] * p[0] + R[r][1] * p[1] + R[r][2] * p[2] + C[r] for r in range(3)])
    return _corner_array([[cols[k][r] for k in range(8)] for r in range(3)])


@dataclass(frozen=True, eq=False)
class Box3D:
    """Rectangular cuboid as a 3x8 matrix of camera-frame corners."""

    corners: np.ndarray

    @classmethod
    def from_pose(cls, center, size, rotation) -> "Box3D":
        R = np.asarray(rotation, dtype=float).tolist()
        return cls(corners_from_pose(tuple(center), tuple(size), R))

    @classmethod
    def from_yaw(cls, center, size, yaw) -> "Box3D":
        return cls.from_pose(center, size, yaw_matrix(yaw))

    @property
    def center(self):
        return self.corners.mean(axis=1)

    def values(self) -> np.ndarray:
        if self.corners.dtype == object:
            return np.vectorize(ad.value_of, otypes=[float])(self.corners)
        return self.corners

    def pose(self):
        """(center, size, rotation) recovered from the corner matrix."""
        B = np.asarray(self.values(), dtype=float)
        C = B.mean(axis=1)
        M = (B - C[:, None]) @ CANONICAL_CORNERS.T / 4.0
        size = np.linalg.norm(M, axis=0)
        if size.min() < 1e-9:
            raise DegenerateBox(f"edge length {size.min():.3g} m below 1e-9 m")
        R = M / size
        scale = max(1.0, float(np.abs(B).max()))
        if (
            np.abs(R.T @ R - np.eye(3)).max() > 1e-6
            or np.linalg.det(R) <= 0
            or np.abs(0.5 * R @ (size[:, None] * CANONICAL_CORNERS) + C[:, None] - B).max() > 1e-6 * scale
        ):
            raise DegenerateBox("corners do not form a cuboid in canonical order")
        return C, size, R

    @property
    def volume(self):
        return float(np.prod(self.pose()[1]))

    def __eq__(self, other):
        return isinstance(other, Box3D) and np.array_equal(self.values(), other.values())

    __hash__ = None


def lift(theta: Theta10) -> Box3D:
    dec = decode_theta(theta)
    if ad.value_of(dec.z) <= 0:
        raise NonPositiveDepth(f"decoded depth {ad.value_of(dec.z):.6g} m is not positive")
    R = dec.q_egocentric.to_matrix()
    return Box3D(corners_from_pose(dec.C, dec.s, R))


def inverse_lift(box: Box3D, context: BoxContext) -> Theta10:
    C, size, R = box.pose()
    if C[2] <= 0:
        raise BehindCamera(f"box center depth {C[2]:.6g} m is not positive")
    beta = math.atan2(C[0], C[2])
    q_ego = Quaternion.from_matrix(R)
    q = (q_ego * Quaternion.from_yaw(beta).conjugate()).normalized().canonical()
    K = context.intrinsics
    z = C[2]
    uc, vc = K.project(C)
    ub, vb = context.anchor2d.center
    ds, rs = context.depth_stats, context.ref_size
    return Theta10(
        (z - ds.mean) / ds.std,
        uc - ub,
        vc - vb,
        math.log(size[0] / rs.W),
        math.log(size[1] / rs.H),
        math.log(size[2] / rs.D),
        q,
        context,
    )


# ---------------------------------------------------------------------------
# rotated IoU


class _YawFrame(NamedTuple):
    footprint: list  # CCW (x, z) vertices
    y_min: float
    y_max: float
    volume: float


def _yaw_frame(box: Box3D) -> _YawFrame:
    C, size, R = box.pose()
    half = 0.5 * R * size  # columns are half-edge vectors
    vertical = None
    for k in range(3):
        a = half[:, k]
        if math.atan2(math.hypot(a[0], a[2]), abs(a[1])) <= YAW_TOL:
            vertical = k
            break
    if vertical is None:
        raise NonYawBox("no box edge is parallel to the camera y-axis")
    i, j = [k for k in range(3) if k != vertical]
    h1 = half[[0, 2], i]
    h2 = half[[0, 2], j]
    c = C[[0, 2]]
    poly = [c + h1 + h2, c - h1 + h2, c - h1 - h2, c + h1 - h2]
    if _signed_area(poly) < 0:
        poly.reverse()
    hy = abs(half[1, vertical])
    return _YawFrame([tuple(p) for p in poly], C[1] - hy, C[1] + hy, float(np.prod(size)))


def _signed_area(poly):
    s = 0.0
    n = len(poly)
    for k in range(n):
        x0, y0 = poly[k]
        x1, y1 = poly[(k + 1) % n]
        s += x0 * y1 - x1 * y0
    return s / 2


def polygon_area(poly) -> float:
    """Shoelace area; slivers below 1e-12 count as zero."""
    if len(poly) < 3:
        return 0.0
    a = abs(_signed_area(poly))
    return a if a >= AREA_EPS else 0.0


def clip_convex(subject, clip):
    """Sutherland-Hodgman clipping of ``subject`` by the CCW convex polygon ``clip``."""
    out = list(subject)
    n = len(clip)
    for k in range(n):
        if not out:
            break
        ax, ay = clip[k]
        bx, by = clip[(k + 1) % n]
        ex, ey = bx - ax, by - ay
        elen = math.hypot(ex, ey)

        def dist(p):
            # signed distance to the edge line, positive inside
            return (ex * (p[1] - ay) - ey * (p[0] - ax)) / elen

        inp, out = out, []
        prev = inp[-1]
        dprev = dist(prev)
        for cur in inp:
            dcur = dist(cur)
            if dcur >= -CLIP_EPS:
                if dprev < -CLIP_EPS:
                    out.append(_lerp(prev, cur, dprev, dcur))
                out.append(cur)
            elif dprev >= -CLIP_EPS:
                out.append(_lerp(prev, cur, dprev, dcur))
            prev, dprev = cur, dcur
    return out


def _lerp(p, q, dp, dq):
    if dp == dq:
        return q
    t = dp / (dp - dq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _bev_intersection(fa: _YawFrame, fb: _YawFrame) -> float:
    return polygon_area(clip_convex(fa.footprint, fb.footprint))


def bev_iou(a: Box3D, b: Box3D) -> float:
    fa, fb = _yaw_frame(a), _yaw_frame(b)
    inter = _bev_intersection(fa, fb)
    area_a = polygon_area(fa.footprint)
    area_b = polygon_area(fb.footprint)
    if area_a <= 0 or area_b <= 0:
        raise ZeroArea("degenerate ground-plane footprint")
    return min(1.0, inter / (area_a + area_b - inter))


def iou_3d(a: Box3D, b: Box3D) -> float:
    fa, fb = _yaw_frame(a), _yaw_frame(b)
    dy = min(fa.y_max, fb.y_max) - max(fa.y_min, fb.y_min)
    if dy <= 0:
        return 0.0
    inter = _bev_intersection(fa, fb) * dy
    return min(1.0, inter / (fa.volume + fb.volume - inter))


def box3d_yaw(box: Box3D):
    """(center, size, yaw) of a yaw-only box whose second axis is vertical."""
    C, size, R = box.pose()
    if math.atan2(math.hypot(R[0, 1], R[2, 1]), R[1, 1]) > YAW_TOL:
        raise NonYawBox("box height axis is not vertical")
    return C, size, math.atan2(R[0, 2], R[2, 2])
