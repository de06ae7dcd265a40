"""KITTI label/result/calibration files, label preprocessing, flat box tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .evaluation.kitti import DetectionRecord, GroundTruthRecord
from .evaluation.nuscenes import NuscBox
from .exceptions import ParseError
from .geometry import Box2D, Box3D, Intrinsics, box3d_yaw, iou_2d

LABEL_FIELDS = 15
RESULT_FIELDS = 16

# Placeholder values the KITTI devkit writes for DontCare rows.
DONTCARE_DEFAULTS = dict(
    truncation=-1.0, occlusion=-1, alpha=-10.0, h=-1.0, w=-1.0, l=-1.0,
    x=-1000.0, y=-1000.0, z=-1000.0, rotation_y=-10.0,
)


@dataclass(frozen=True)
class KittiLabelRow:
    type: str
    truncation: float
    occlusion: int
    alpha: float
    left: float
    top: float
    right: float
    bottom: float
    h: float
    w: float
    l: float  # noqa: E741
    x: float
    y: float
    z: float
    rotation_y: float
    score: Optional[float] = None
    # original whitespace-split tokens; reused on output while they still agree
    source: Optional[tuple] = field(default=None, compare=False, repr=False)

    @property
    def is_dontcare(self) -> bool:
        return self.type == "DontCare"

    @property
    def box2d(self) -> Box2D:
        return Box2D(self.left, self.top, self.right, self.bottom)

    def values(self) -> list:
        vals = [
            self.truncation, self.occlusion, self.alpha, self.left, self.top, self.right, self.bottom,
            self.h, self.w, self.l, self.x, self.y, self.z, self.rotation_y,
        ]
        if self.score is not None:
            vals.append(self.score)
        return vals

    def box3d(self) -> Box3D:
        """Cuboid from dims and bottom-face center; length runs along rotation_y."""
        return kitti_box3d(self.h, self.w, self.l, self.x, self.y, self.z, self.rotation_y)


def kitti_box3d(h, w, l, x, y, z, rotation_y) -> Box3D:  # noqa: E741
    return Box3D.from_yaw((x, y - h / 2, z), (w, h, l), rotation_y + math.pi / 2)


def box3d_to_kitti(box: Box3D):
    """Inverse of :func:`kitti_box3d`: (h, w, l, x, y, z, rotation_y)."""
    C, size, yaw = box3d_yaw(box)
    ry = math.remainder(yaw - math.pi / 2, 2 * math.pi)
    w, h, l = size  # noqa: E741
    return h, w, l, C[0], C[1] + h / 2, C[2], ry


def parse_label_line(line: str, lineno: int = None, path=None) -> KittiLabelRow:
    tokens = line.split()
    if len(tokens) not in (LABEL_FIELDS, RESULT_FIELDS):
        raise ParseError(f"expected {LABEL_FIELDS} or {RESULT_FIELDS} fields, got {len(tokens)}", path, lineno)
    try:
        nums = [float(t) for t in tokens[1:]]
    except ValueError as exc:
        raise ParseError(f"non-numeric field: {exc}", path, lineno) from None
    if nums[1] != int(nums[1]):
        raise ParseError("occlusion must be an integer", path, lineno)
    row = KittiLabelRow(
        tokens[0], nums[0], int(nums[1]), *nums[2:14],
        score=nums[14] if len(nums) == 15 else None,
        source=tuple(tokens),
    )
    _check_ranges(row, lineno, path)
    return row


def _check_ranges(row: KittiLabelRow, lineno, path):
    if row.is_dontcare:
        if not row.right >= row.left or not row.bottom >= row.top:
            raise ParseError("DontCare box corners out of order", path, lineno)
        return
    if not (row.right > row.left and row.bottom > row.top):
        raise ParseError("2D box must satisfy right > left and bottom > top", path, lineno)
    if row.score is None:
        if not 0.0 <= row.truncation <= 1.0:
            raise ParseError(f"truncation {row.truncation} outside [0, 1]", path, lineno)
        if row.occlusion not in (0, 1, 2, 3):
            raise ParseError(f"occlusion {row.occlusion} outside {{0, 1, 2, 3}}", path, lineno)
    elif not math.isfinite(row.score):
        raise ParseError("score must be finite", path, lineno)
    if not (row.h > 0 and row.w > 0 and row.l > 0):
        raise ParseError("3D dimensions must be positive", path, lineno)


def parse_label_text(text: str, path=None) -> List[KittiLabelRow]:
    return [
        parse_label_line(line, i, path) for i, line in enumerate(text.splitlines(), 1) if line.strip()
    ]


def read_label_rows(path) -> List[KittiLabelRow]:
    return parse_label_text(Path(path).read_text(), str(path))


def _fmt(value, is_int=False):
    return str(int(value)) if is_int else f"{value:.2f}"


def serialize_row(row: KittiLabelRow) -> str:
    vals = row.values()
    if row.source is not None and len(row.source) == len(vals) + 1 and row.source[0] == row.type:
        if all(float(t) == v for t, v in zip(row.source[1:], vals)):
            return " ".join(row.source)
    return " ".join([row.type] + [_fmt(v, i == 1) for i, v in enumerate(vals)])


def serialize_rows(rows: Iterable[KittiLabelRow]) -> str:
    return "".join(serialize_row(r) + "\n" for r in rows)


def write_label_rows(path, rows):
    Path(path).write_text(serialize_rows(rows))


def row_to_gt(row: KittiLabelRow) -> GroundTruthRecord:
    if row.is_dontcare:
        return GroundTruthRecord(row.type, row.box2d, None, row.truncation, row.occlusion, True)
    return GroundTruthRecord(row.type, row.box2d, row.box3d(), row.truncation, row.occlusion, False)


def row_to_detection(row: KittiLabelRow) -> DetectionRecord:
    score = 1.0 if row.score is None else row.score
    return DetectionRecord(row.type, row.box2d, row.box3d(), score)


def parse_labels(path) -> List[GroundTruthRecord]:
    return [row_to_gt(r) for r in read_label_rows(path)]


def parse_detections(path) -> List[DetectionRecord]:
    return [row_to_detection(r) for r in read_label_rows(path) if not r.is_dontcare]


def read_dataset(directory, reader, names: Optional[Sequence[str]] = None) -> dict:
    """{image id: records} for every ``*.txt`` file (or the given ids) in a directory."""
    directory = Path(directory)
    if names is None:
        names = sorted(p.stem for p in directory.glob("*.txt"))
    out = {}
    for name in names:
        p = directory / f"{name}.txt"
        out[name] = reader(p) if p.exists() else []
    return out


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class KittiCalib:
    P2: np.ndarray

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics(self.P2[0, 0], self.P2[1, 1], self.P2[0, 2], self.P2[1, 2])


def parse_calib_text(text: str, path=None) -> KittiCalib:
    mats = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, _, rest = line.partition(":")
        try:
            vals = [float(t) for t in rest.split()]
        except ValueError:
            raise ParseError(f"non-numeric entry for {key.strip()}", path, lineno) from None
        mats[key.strip()] = (vals, lineno)
    if "P2" not in mats:
        raise ParseError("no P2 projection matrix", path)
    vals, lineno = mats["P2"]
    if len(vals) != 12:
        raise ParseError(f"P2 needs 12 values, got {len(vals)}", path, lineno)
    P2 = np.array(vals).reshape(3, 4)
    if not (P2[0, 0] > 0 and P2[1, 1] > 0):
        raise ParseError("P2 focal lengths must be positive", path, lineno)
    return KittiCalib(P2)


def parse_calib(path) -> KittiCalib:
    return parse_calib_text(Path(path).read_text(), str(path))


# ---------------------------------------------------------------------------
# label preprocessing


@dataclass
class PreprocessReport:
    total: int = 0
    converted: int = 0
    deleted: int = 0

    def __iadd__(self, other):
        self.total += other.total
        self.converted += other.converted
        self.deleted += other.deleted
        return self

    @property
    def kept(self):
        return self.total - self.converted - self.deleted

    def summary(self, class_name="Car"):
        def pct(n):
            return 100.0 * n / self.total if self.total else 0.0

        return (
            f"{class_name}: {self.total} annotated, {self.converted} ({pct(self.converted):.1f}%) converted "
            f"to DontCare, {self.deleted} ({pct(self.deleted):.1f}%) deleted, {self.kept} "
            f"({pct(self.kept):.1f}%) kept"
        )


def to_dontcare(row: KittiLabelRow) -> KittiLabelRow:
    return replace(row, type="DontCare", score=None, source=None, **DONTCARE_DEFAULTS)


def covered_fraction(box: Box2D, covers: Sequence[Box2D]) -> float:
    """Fraction of ``box`` area inside the union of ``covers`` (exact)."""
    clipped = []
    for c in covers:
        u1, v1 = max(c.u1, box.u1), max(c.v1, box.v1)
        u2, v2 = min(c.u2, box.u2), min(c.v2, box.v2)
        if u2 > u1 and v2 > v1:
            clipped.append((u1, v1, u2, v2))
    if not clipped or box.area <= 0:
        return 0.0
    us = sorted({box.u1, box.u2, *(c[0] for c in clipped), *(c[2] for c in clipped)})
    vs = sorted({box.v1, box.v2, *(c[1] for c in clipped), *(c[3] for c in clipped)})
    area = 0.0
    for ua, ub in zip(us, us[1:]):
        for va, vb in zip(vs, vs[1:]):
            um, vm = (ua + ub) / 2, (va + vb) / 2
            if any(c[0] <= um <= c[2] and c[1] <= vm <= c[3] for c in clipped):
                area += (ub - ua) * (vb - va)
    return area / box.area


def preprocess_labels(
    rows: Sequence[KittiLabelRow],
    classes: Sequence[str] = ("Car",),
    dontcare_iou: float = 0.5,
    coverage: float = 0.95,
):
    """Convert positives overlapping DontCare regions, drop fully occluded ones.

    1. A positive whose 2D IoU with any DontCare box exceeds ``dontcare_iou``
       becomes DontCare (repeated until no more conversions happen).
    2. A remaining positive whose 2D box is covered at least ``coverage`` by the
       union of 2D boxes of strictly nearer non-DontCare objects is deleted.
    Returns ``(rows, PreprocessReport)``.  Applying it twice changes nothing.
    """
    rows = list(rows)
    targets = {c.lower() for c in classes}
    report = PreprocessReport(total=sum(r.type.lower() in targets for r in rows))
    changed = True
    while changed:
        changed = False
        regions = [r.box2d for r in rows if r.is_dontcare]
        for i, r in enumerate(rows):
            if r.type.lower() in targets and any(iou_2d(r.box2d, d) > dontcare_iou for d in regions if d.area > 0):
                rows[i] = to_dontcare(r)
                report.converted += 1
                changed = True
    objects = [r for r in rows if not r.is_dontcare]
    keep = []
    for r in rows:
        if r.type.lower() in targets:
            nearer = [o.box2d for o in objects if o is not r and o.z < r.z]
            if covered_fraction(r.box2d, nearer) >= coverage:
                report.deleted += 1
                continue
        keep.append(r)
    return keep, report


# ---------------------------------------------------------------------------
# flat nuScenes-style box tables

NUSC_COLUMNS = ("sample", "x", "y", "z", "w", "l", "h", "yaw")


def read_nusc_boxes(path, with_score: bool) -> List[NuscBox]:
    """CSV with header sample,x,y,z,w,l,h,yaw[,score]."""
    boxes = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = NUSC_COLUMNS + (("score",) if with_score else ())
        missing = [c for c in required if c not in (reader.fieldnames or ())]
        if missing:
            raise ParseError(f"missing columns {missing}", str(path), 1)
        for lineno, rec in enumerate(reader, 2):
            try:
                vals = [float(rec[c]) for c in NUSC_COLUMNS[1:]]
                score = float(rec["score"]) if with_score else None
            except (TypeError, ValueError):
                raise ParseError("non-numeric field", str(path), lineno) from None
            if min(vals[3:6]) <= 0:
                raise ParseError("box sizes must be positive", str(path), lineno)
            boxes.append(NuscBox(rec["sample"], tuple(vals[:3]), tuple(vals[3:6]), vals[6], score))
    return boxes


def write_nusc_boxes(path, boxes: Sequence[NuscBox]):
    with_score = any(b.score is not None for b in boxes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(NUSC_COLUMNS + (("score",) if with_score else ()))
        for b in boxes:
            row = [b.sample, *map(repr, b.center), *map(repr, b.size), repr(b.yaw)]
            if with_score:
                row.append(repr(b.score))
            w.writerow(row)
