"""Detection losses and the disentangling transformation.

Every loss is written against the elementary functions of
:mod:`disentangle3d.autodiff`, so the 3D losses can be differentiated in
forward mode by passing a parametrization with dual entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

from . import autodiff as ad
from .geometry import Box2D, Box3D, Theta10, lift, siou

EPS = 1e-7


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class HuberParams:
    delta: float = 3.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("Huber delta must be positive")


@dataclass(frozen=True)
class ConfidenceTemp:
    T: float = 1.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class LossWeights:
    head_2d: float = 1.0
    head_3d: float = 0.5


def _clamp(p):
    return min(max(p, EPS), 1.0 - EPS)


def focal_loss(p2d, y, params: FocalParams = FocalParams()):
    if y not in (0, 1):
        raise ValueError("focal loss target must be 0 or 1")
    p = _clamp(p2d)
    a, g = params.alpha, params.gamma
    return -a * y * (1 - p) ** g * ad.log(p) - (1 - a) * (1 - y) * p**g * ad.log(1 - p)


def huber(x, delta):
    ax = abs(x)
    if ax <= delta:
        return 0.5 * x * x
    return delta * (ax - 0.5 * delta)


def loss_2d_bb(pred: Box2D, gt: Box2D):
    return 1 - siou(pred, gt)


def loss_3d_bb(pred: Box3D, gt: Box3D, params: HuberParams = HuberParams()):
    """Component-wise Huber over the 3x8 corner difference, divided by 8."""
    P, G = pred.corners, gt.corners
    total = 0.0
    for r in range(3):
        for k in range(8):
            total = total + huber(P[r, k] - G[r, k], params.delta)
    return total / 8


def confidence_target(l3d, temp: ConfidenceTemp = ConfidenceTemp()):
    if l3d < 0:
        raise ValueError("3D loss must be nonnegative")
    return math.exp(-ad.value_of(l3d) / temp.T)


def bce(p, target):
    p = _clamp(p)
    return -target * ad.log(p) - (1 - target) * ad.log(1 - p)


def fuse_confidence(p2d, p3d_given_2d):
    """Unconditioned 3D confidence by the law of total probability."""
    for p in (p2d, p3d_given_2d):
        if not 0.0 <= p <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
    return p3d_given_2d * p2d


def confidence_loss_3d(p3d_given_2d, pred: Box3D, gt: Box3D, temp=ConfidenceTemp(), huber_params=HuberParams()):
    """BCE against the self-supervised target, always from the entangled 3D loss."""
    target = confidence_target(loss_3d_bb(pred, gt, huber_params), temp)
    return bce(p3d_given_2d, target)


def combined_loss(focal, bb2d, bb3d, conf3d, weights: LossWeights = LossWeights()):
    return weights.head_2d * (focal + bb2d) + weights.head_3d * (bb3d + conf3d)


# ---------------------------------------------------------------------------
# disentangling transformation


@dataclass(frozen=True)
class GroupDecomposition:
    """Named, ordered partition of the indices of a parameter vector."""

    groups: tuple
    size: int

    def __post_init__(self):
        seen = [i for _, idx in self.groups for i in idx]
        if sorted(seen) != list(range(self.size)):
            raise ValueError("groups must partition the parameter indices")

    @property
    def names(self):
        return [name for name, _ in self.groups]

    def __len__(self):
        return len(self.groups)

    def hybrid(self, j, theta, theta_hat):
        """Group ``j`` from ``theta``, everything else from ``theta_hat``."""
        out = list(theta_hat)
        for i in self.groups[j][1]:
            out[i] = theta[i]
        return out


GROUPS_2D = GroupDecomposition((("center", (0, 1)), ("size", (2, 3))), 4)
GROUPS_3D = GroupDecomposition(
    (
        ("depth", (0,)),
        ("proj_center", (1, 2)),
        ("rotation", (6, 7, 8, 9)),
        ("dims", (3, 4, 5)),
    ),
    10,
)


class DisentangledLoss(NamedTuple):
    total: object
    terms: dict


def disentangle(
    base_loss: Callable,
    psi: Callable,
    groups: GroupDecomposition,
    theta: Sequence,
    theta_hat: Sequence,
    target=None,
) -> DisentangledLoss:
    """Sum of ``base_loss`` over hybrids that free one parameter group at a time."""
    if target is None:
        target = psi(theta_hat)
    terms = {}
    total = 0.0
    for j, name in enumerate(groups.names):
        term = base_loss(psi(groups.hybrid(j, theta, theta_hat)), target)
        terms[name] = term
        total = total + term
    return DisentangledLoss(total, terms)


def encode_2d(box: Box2D, anchor: Box2D):
    """Anchor-relative (du, dv, dw, dh) of a valid box."""
    ua, va = anchor.center
    ub, vb = box.center
    return [
        (ub - ua) / anchor.width,
        (vb - va) / anchor.height,
        math.log(box.width / anchor.width),
        math.log(box.height / anchor.height),
    ]


def decode_2d(params, anchor: Box2D) -> Box2D:
    du, dv, dw, dh = params
    ua, va = anchor.center
    return Box2D.from_center(
        ua + du * anchor.width,
        va + dv * anchor.height,
        anchor.width * ad.exp(dw),
        anchor.height * ad.exp(dh),
    )


def disentangled_loss_2d(params, gt: Box2D, anchor: Box2D) -> DisentangledLoss:
    psi = lambda v: decode_2d(v, anchor)  # noqa: E731
    return disentangle(loss_2d_bb, psi, GROUPS_2D, list(params), encode_2d(gt, anchor), gt)


def entangled_loss_3d(theta: Theta10, gt: Box3D, params: HuberParams = HuberParams()):
    return loss_3d_bb(lift(theta), gt, params)


def disentangled_loss_3d(
    theta: Theta10, gt: Box3D, theta_hat: Theta10, params: HuberParams = HuberParams()
) -> DisentangledLoss:
    """Disentangled corner loss; ``theta_hat`` is the inverse lift of ``gt`` in the same context."""
    psi = lambda v: lift(theta.with_vector(v))  # noqa: E731
    base = lambda b, g: loss_3d_bb(b, g, params)  # noqa: E731
    return disentangle(base, psi, GROUPS_3D, theta.vector(), theta_hat.vector(), gt)
