"""Single-box optimization under the entangled vs disentangled corner loss."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .autodiff import value_of
from .exceptions import DivergedToInvalid, ParseError, UndefinedAtPoint
from .geometry import (
    THETA_NAMES,
    Box2D,
    Box3D,
    BoxContext,
    DepthStats,
    Intrinsics,
    RefSize,
    Theta10,
    decode_theta,
    inverse_lift,
    lift,
)
from .grad import value_and_grad
from .losses import GROUPS_3D, HuberParams, disentangled_loss_3d, loss_3d_bb

MODES = ("entangled", "disentangled")
LOSS_THRESHOLDS = (1.0, 0.1, 0.01, 0.001)

CSV_COLUMNS = (
    ["iter"]
    + list(THETA_NAMES)
    + ["z", "uc", "vc", "W", "H", "D", "qr_ego", "qi_ego", "qj_ego", "qk_ego", "L3D_entangled"]
    + [f"term_{name}" for name in GROUPS_3D.names]
)


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0
    iterations: int = 3000

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if int(self.iterations) != self.iterations or self.iterations <= 0:
            raise ValueError("iterations must be a positive integer")


@dataclass
class TrajectoryRow:
    iteration: int
    theta: np.ndarray
    z: float
    c: tuple
    s: tuple
    q_egocentric: tuple
    loss_entangled: float
    terms: Optional[dict] = None

    def as_csv_row(self):
        terms = [""] * len(GROUPS_3D) if self.terms is None else [repr(self.terms[n]) for n in GROUPS_3D.names]
        values = [*self.theta, self.z, *self.c, *self.s, *self.q_egocentric, self.loss_entangled]
        return [str(self.iteration)] + [repr(float(x)) for x in values] + terms


@dataclass
class TrajectoryLog:
    mode: str
    gt_size: tuple
    gt_theta: np.ndarray
    rows: list = field(default_factory=list)
    aborted: bool = False
    message: str = ""

    def __len__(self):
        return len(self.rows)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss_entangled for r in self.rows])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.rows])

    @property
    def sizes(self) -> np.ndarray:
        return np.array([r.s for r in self.rows])

    def dimension_deviation(self) -> np.ndarray:
        """Per-iterate max absolute size error w.r.t. the ground truth, meters."""
        return np.abs(self.sizes - np.asarray(self.gt_size)).max(axis=1)

    def to_csv(self, path, log_every: int = 1):
        if log_every < 1:
            raise ValueError("log_every must be >= 1")
        last = len(self.rows) - 1
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in self.rows:
                if row.iteration % log_every == 0 or row.iteration == last:
                    w.writerow(row.as_csv_row())


def _row(iteration, theta: Theta10, loss, terms):
    dec = decode_theta(theta)
    return TrajectoryRow(
        iteration,
        theta.as_array(),
        float(dec.z),
        tuple(float(x) for x in dec.c),
        tuple(float(x) for x in dec.s),
        tuple(float(x) for x in dec.q_egocentric.as_tuple()),
        float(loss),
        None if terms is None else {k: float(value_of(v)) for k, v in terms.items()},
    )


def run_toy(
    init_theta: Theta10,
    gt: Box3D,
    cfg: SgdConfig = SgdConfig(),
    mode: str = "disentangled",
    huber: HuberParams = HuberParams(),
    raise_on_divergence: bool = True,
) -> TrajectoryLog:
    """Heavy-ball SGD from ``init_theta`` toward ``gt``; logs every iterate."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    theta_hat = inverse_lift(gt, init_theta.context)
    _, gt_size, _ = gt.pose()
    log = TrajectoryLog(mode, tuple(gt_size), theta_hat.as_array())

    if mode == "entangled":

        def objective(th, g):
            return loss_3d_bb(lift(th), g, huber)

    else:

        def objective(th, g):
            res = disentangled_loss_3d(th, g, theta_hat, huber)
            objective.terms = res.terms
            return res.total

    theta = init_theta
    velocity = np.zeros(10)
    for it in range(cfg.iterations + 1):
        try:
            value, grad = value_and_grad(objective, theta, gt)
            if mode == "entangled":
                entangled, terms = value, None
            else:
                entangled, terms = float(loss_3d_bb(lift(theta), gt, huber)), objective.terms
        except UndefinedAtPoint as exc:
            log.aborted = True
            log.message = f"iteration {it}: {exc}"
            if raise_on_divergence:
                raise DivergedToInvalid(log.message, log) from exc
            return log
        log.rows.append(_row(it, theta, entangled, terms))
        if it == cfg.iterations:
            break
        x = theta.as_array()
        velocity = cfg.momentum * velocity - cfg.learning_rate * (grad + cfg.weight_decay * x)
        theta = theta.with_vector(x + velocity)
    return log


def _first_below(losses, threshold):
    idx = np.flatnonzero(losses < threshold)
    return int(idx[0]) if idx.size else None


def _rotation_gap(q_rows, q_ref):
    """Angle (rad) between allocentric rotations, sign-invariant."""
    q = q_rows / np.linalg.norm(q_rows, axis=1, keepdims=True)
    r = np.asarray(q_ref) / np.linalg.norm(q_ref)
    return 2 * np.arccos(np.clip(np.abs(q @ r), 0.0, 1.0))


def run_summary(log: TrajectoryLog) -> dict:
    th = log.thetas
    ref = log.gt_theta
    dim_dev = log.dimension_deviation()
    losses = log.losses
    return {
        "mode": log.mode,
        "iterations": len(log) - 1,
        "aborted": log.aborted,
        "final_loss": float(losses[-1]),
        "max_dimension_deviation": float(dim_dev.max()),
        "argmax_dimension_deviation": int(dim_dev.argmax()),
        "max_depth_deviation": float(np.abs(th[:, 0] - ref[0]).max()),
        "max_center_deviation": float(np.hypot(th[:, 1] - ref[1], th[:, 2] - ref[2]).max()),
        "max_rotation_deviation": float(_rotation_gap(th[:, 6:], ref[6:]).max()),
        "first_below": {str(t): _first_below(losses, t) for t in LOSS_THRESHOLDS},
    }


def compare_runs(a: TrajectoryLog, b: TrajectoryLog) -> dict:
    """Side-by-side statistics of two runs plus numeric differences (a - b)."""
    if len(a) != len(b) and not (a.aborted or b.aborted):
        raise ValueError("runs have different lengths")
    sa, sb = run_summary(a), run_summary(b)
    deltas = {
        k: sa[k] - sb[k]
        for k in sa
        if isinstance(sa[k], (int, float)) and not isinstance(sa[k], bool) and k != "iterations"
    }
    return {a.mode if a.mode != b.mode else "a": sa, b.mode if a.mode != b.mode else "b": sb, "deltas": deltas}


# ---------------------------------------------------------------------------
# fixture files


@dataclass(frozen=True)
class ToyFixture:
    gt: Box3D
    init_theta: Theta10

    @property
    def context(self) -> BoxContext:
        return self.init_theta.context


def _floats(key, text, n, path, lineno):
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ParseError(f"non-numeric value for {key!r}", path, lineno) from None
    if len(vals) != n:
        raise ParseError(f"{key!r} expects {n} values, got {len(vals)}", path, lineno)
    return vals


_FIXTURE_ARITY = {
    "intrinsics": 4,
    "anchor": 4,
    "depth_stats": 2,
    "ref_size": 3,
    "gt_center": 3,
    "gt_size": 3,
    "gt_yaw_deg": 1,
    "gt_corners": 24,
    "gt_theta": 10,
    "init_theta": 10,
}


def parse_fixture(text: str, path=None) -> ToyFixture:
    """Parse a ``key = value`` fixture; ``#`` starts a comment."""
    entries = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIXTURE_ARITY:
            raise ParseError(f"unknown key {key!r}", path, lineno)
        entries[key] = _floats(key, value, _FIXTURE_ARITY[key], path, lineno)
        lines[key] = lineno
    for key in ("intrinsics", "anchor", "init_theta"):
        if key not in entries:
            raise ParseError(f"missing required key {key!r}", path)
    context = BoxContext(
        Box2D(*entries["anchor"]),
        Intrinsics(*entries["intrinsics"]),
        DepthStats(*entries.get("depth_stats", DepthStats())),
        RefSize(*entries.get("ref_size", RefSize())),
    )
    if "gt_corners" in entries:
        gt = Box3D(np.array(entries["gt_corners"]).reshape(3, 8))
    elif "gt_theta" in entries:
        gt = lift(Theta10.from_vector(entries["gt_theta"], context))
    elif {"gt_center", "gt_size", "gt_yaw_deg"} <= entries.keys():
        gt = Box3D.from_yaw(entries["gt_center"], entries["gt_size"], math.radians(entries["gt_yaw_deg"][0]))
    else:
        raise ParseError("fixture needs gt_corners, gt_theta or gt_center/gt_size/gt_yaw_deg", path)
    gt.pose()
    return ToyFixture(gt, Theta10.from_vector(entries["init_theta"], context))


def load_fixture(path=None) -> ToyFixture:
    """Load a fixture file, or the packaged default when ``path`` is None."""
    if path is None:
        text = resources.files("disentangle3d.data").joinpath("toy_fixture.txt").read_text()
        return parse_fixture(text, "toy_fixture.txt")
    return parse_fixture(Path(path).read_text(), str(path))


# ---------------------------------------------------------------------------
# estimator interface


class BoxFitter(BaseEstimator):
    """Fit a single 10-parameter box to a ground-truth cuboid by momentum SGD.

    ``fit(init_theta, gt)`` stores ``theta_`` (final parametrization) and
    ``trajectory_`` (the full :class:`TrajectoryLog`).
    """

    def __init__(self, mode="disentangled", learning_rate=0.001, momentum=0.9, weight_decay=0.0,
                 iterations=3000, huber_delta=3.0):
        self.mode = mode
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.iterations = iterations
        self.huber_delta = huber_delta

    def fit(self, init_theta: Theta10, gt: Box3D):
        cfg = SgdConfig(self.learning_rate, self.momentum, self.weight_decay, self.iterations)
        log = run_toy(init_theta, gt, cfg, self.mode, HuberParams(self.huber_delta))
        self.trajectory_ = log
        self.theta_ = init_theta.with_vector(log.thetas[-1])
        self.gt_ = gt
        return self

    def predict(self, X=None) -> Box3D:
        check_is_fitted(self, "theta_")
        return lift(self.theta_)

    def score(self, X=None, y: Optional[Box3D] = None) -> float:
        """Negative entangled corner loss of the fitted box."""
        check_is_fitted(self, "theta_")
        target = self.gt_ if y is None else y
        return -float(loss_3d_bb(self.predict(), target, HuberParams(self.huber_delta)))


def fit_both(fixture: ToyFixture, cfg: SgdConfig = SgdConfig()):
    """Run both modes on a fixture; returns (entangled, disentangled, summary)."""
    logs = {m: run_toy(fixture.init_theta, fixture.gt, cfg, m, raise_on_divergence=False) for m in MODES}
    return logs["entangled"], logs["disentangled"], compare_runs(logs["entangled"], logs["disentangled"])
