"""Exact gradients of 3D box losses w.r.t. the 10 regressed parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Dual, partials_of, value_of
from .exceptions import NonPositiveDepth, UndefinedAtPoint
from .geometry import (
    Box2D,
    Box3D,
    BoxContext,
    DegenerateQuaternion,
    Intrinsics,
    Quaternion,
    Theta10,
    inverse_lift,
)
from .losses import HuberParams, disentangled_loss_3d, entangled_loss_3d

NPARAMS = 10

# Left color camera of a typical KITTI recording.
KITTI_INTRINSICS = Intrinsics(fx=721.5377, fy=721.5377, cx=609.5593, cy=172.854)

LossFn = Callable[[Theta10, Box3D], object]


def entangled_objective(theta: Theta10, gt: Box3D, params: HuberParams = HuberParams()):
    return entangled_loss_3d(theta, gt, params)


def disentangled_objective(theta: Theta10, gt: Box3D, params: HuberParams = HuberParams()):
    theta_hat = inverse_lift(gt, theta.context)
    return disentangled_loss_3d(theta, gt, theta_hat, params).total


def _evaluate(loss_fn: LossFn, theta: Theta10, gt: Box3D):
    try:
        return loss_fn(theta, gt)
    except (NonPositiveDepth, DegenerateQuaternion) as exc:
        raise UndefinedAtPoint(str(exc)) from exc


def grad_loss(loss_fn: LossFn, theta: Theta10, gt: Box3D) -> np.ndarray:
    """Gradient of ``loss_fn(theta, gt)`` by forward propagation of 10 partials."""
    seeded = [Dual.variable(v, i, NPARAMS) for i, v in enumerate(theta.as_array())]
    out = _evaluate(loss_fn, theta.with_vector(seeded), gt)
    return partials_of(out, NPARAMS)


def value_and_grad(loss_fn: LossFn, theta: Theta10, gt: Box3D):
    seeded = [Dual.variable(v, i, NPARAMS) for i, v in enumerate(theta.as_array())]
    out = _evaluate(loss_fn, theta.with_vector(seeded), gt)
    return float(value_of(out)), partials_of(out, NPARAMS)


@dataclass(frozen=True)
class GradientReport:
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_err: float
    step: float


def relative_error(analytic, numeric) -> float:
    a, n = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / scale))


def numeric_gradient(loss_fn, x: np.ndarray, step: float) -> np.ndarray:
    """Central differences of a function of a flat parameter vector."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (float(loss_fn(x + e)) - float(loss_fn(x - e))) / (2 * step)
    return g


def check_gradient(loss_fn: LossFn, theta: Theta10, gt: Box3D, step: float = 1e-5) -> GradientReport:
    if not step > 0:
        raise ValueError("step must be positive")
    analytic = grad_loss(loss_fn, theta, gt)
    numeric = numeric_gradient(lambda v: _evaluate(loss_fn, theta.with_vector(v), gt), theta.as_array(), step)
    return GradientReport(analytic, numeric, relative_error(analytic, numeric), step)


def default_context(anchor: Box2D | None = None) -> BoxContext:
    if anchor is None:
        anchor = Box2D(580.0, 150.0, 640.0, 200.0)
    return BoxContext(anchor, KITTI_INTRINSICS)


def sample_theta(rng: np.random.Generator, context: BoxContext | None = None) -> Theta10:
    """Random parametrization whose decoded box lies 5-60 m in front of the camera."""
    context = context or default_context()
    ds = context.depth_stats
    z = rng.uniform(5.0, 60.0)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Theta10(
        (z - ds.mean) / ds.std,
        rng.uniform(-80.0, 80.0),
        rng.uniform(-40.0, 40.0),
        *rng.uniform(-0.4, 0.4, size=3),
        Quaternion(*q * rng.uniform(0.7, 1.3)),
        context,
    )
