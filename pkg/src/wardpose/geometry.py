"""Keypoint containers, bounding-box encodings, and box arithmetic.

Two box encodings are used side by side:

* ``SubjectBox`` -- ``[x, y, l, w]`` where ``(x, y)`` is the upper-left
  corner, ``l`` is the HEIGHT and ``w`` is the WIDTH. The l/w naming is
  deliberate and preserved throughout; do not "fix" it.
* ``CornerBox`` -- upper-left ``(x1, y1)`` and lower-right ``(x2, y2)``.

All types are immutable values and all operations are pure, so they are
safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class NoValidKeypoints(ValueError):
    """No keypoint passed the confidence/validity filter."""


class InvalidResolution(ValueError):
    """A resolution with a zero or negative dimension was supplied."""


# Part scheme: 18 body parts followed by 70 face landmarks. Body ids follow
# the usual 2D pose ordering (nose, neck, right arm, left arm, right leg,
# left leg, eyes, ears); face landmark ids are contiguous after the body.
BODY_PART_NAMES: tuple[str, ...] = (
    "nose", "neck",
    "right_shoulder", "right_elbow", "right_wrist",
    "left_shoulder", "left_elbow", "left_wrist",
    "right_hip", "right_knee", "right_ankle",
    "left_hip", "left_knee", "left_ankle",
    "right_eye", "left_eye", "right_ear", "left_ear",
)
FACE_PART_COUNT = 70
PART_COUNT = len(BODY_PART_NAMES) + FACE_PART_COUNT

# Head landmarks of the body scheme count as facial for blurring purposes.
_FACE_BODY_IDS = frozenset({0, 14, 15, 16, 17})


def is_face_part(part_id: int) -> bool:
    """True for dedicated face landmarks and the head parts of the body set."""
    return part_id in _FACE_BODY_IDS or len(BODY_PART_NAMES) <= part_id < PART_COUNT


def part_name(part_id: int) -> str:
    if 0 <= part_id < len(BODY_PART_NAMES):
        return BODY_PART_NAMES[part_id]
    if len(BODY_PART_NAMES) <= part_id < PART_COUNT:
        return f"face_{part_id - len(BODY_PART_NAMES)}"
    raise ValueError(f"part_id {part_id} outside the part scheme")


@dataclass(frozen=True)
class Keypoint:
    """One detected landmark: pixel position, confidence, and part id."""

    x: float
    y: float
    confidence: float
    part_id: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"keypoint coordinates must be finite: ({self.x}, {self.y})")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"keypoint coordinates must be >= 0: ({self.x}, {self.y})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1]: {self.confidence}")
        if not 0 <= self.part_id < PART_COUNT:
            raise ValueError(f"part_id {self.part_id} outside the part scheme")


@dataclass(frozen=True)
class KeypointSet:
    """All keypoints reported for one subject in one frame.

    ``valid_mask[i]`` marks whether ``points[i]`` was actually detected;
    undetected parts may still carry placeholder coordinates.
    """

    subject_index: int
    points: tuple[Keypoint, ...]
    valid_mask: tuple[bool, ...]

    def __post_init__(self) -> None:
        if self.subject_index < 0:
            raise ValueError("subject_index must be >= 0")
        if len(self.points) != len(self.valid_mask):
            raise ValueError("points and valid_mask lengths differ")

    def valid_points(self) -> list[Keypoint]:
        return [p for p, ok in zip(self.points, self.valid_mask) if ok]

    def mean_confidence(self) -> float:
        """Mean confidence over valid points; 0.0 when none are valid."""
        pts = self.valid_points()
        if not pts:
            return 0.0
        return sum(p.confidence for p in pts) / len(pts)


def keypoint_set(subject_index: int, points: list[Keypoint] | tuple[Keypoint, ...]) -> KeypointSet:
    """Build a KeypointSet where every listed point is valid."""
    pts = tuple(points)
    return KeypointSet(subject_index, pts, (True,) * len(pts))


@dataclass(frozen=True)
class SubjectBox:
    """Upper-left corner plus height ``l`` and width ``w`` (in that order)."""

    x: float
    y: float
    l: float
    w: float
    subject_index: int = 0

    def __post_init__(self) -> None:
        if self.l < 0 or self.w < 0:
            raise ValueError(f"box height/width must be >= 0: l={self.l}, w={self.w}")
        if self.subject_index < 0:
            raise ValueError("subject_index must be >= 0")

    @property
    def area(self) -> float:
        return self.l * self.w


@dataclass(frozen=True)
class CornerBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"corners out of order: ({self.x1},{self.y1})-({self.x2},{self.y2})")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height


def bbox_from_keypoints(
    kps: KeypointSet,
    frame_w: float,
    frame_h: float,
    min_confidence: float = 0.05,
    margin: float = 0.0,
) -> SubjectBox:
    """Smallest axis-aligned rectangle over qualifying keypoints.

    A point qualifies when its valid_mask entry is true and its confidence
    is >= ``min_confidence``. The minimum rectangle is expanded by
    ``margin`` (a fraction of its own width/height) on each side, then
    clamped to ``[0, frame_w] x [0, frame_h]``.

    Raises NoValidKeypoints when nothing qualifies. A single qualifying
    point yields a legal zero-area box.
    """
    xs: list[float] = []
    ys: list[float] = []
    for point, ok in zip(kps.points, kps.valid_mask):
        if ok and point.confidence >= min_confidence:
            xs.append(point.x)
            ys.append(point.y)
    if not xs:
        raise NoValidKeypoints(
            f"subject {kps.subject_index}: no keypoint with confidence >= {min_confidence}"
        )
    x_min, x_max = min(xs), max(xs)
    y_min, y_max = min(ys), max(ys)
    pad_x = margin * (x_max - x_min)
    pad_y = margin * (y_max - y_min)
    x_min = max(0.0, x_min - pad_x)
    y_min = max(0.0, y_min - pad_y)
    x_max = min(float(frame_w), x_max + pad_x)
    y_max = min(float(frame_h), y_max + pad_y)
    return SubjectBox(
        x=x_min, y=y_min, l=y_max - y_min, w=x_max - x_min,
        subject_index=kps.subject_index,
    )


def xylw_to_corners(b: SubjectBox) -> CornerBox:
    """``[x, y, l, w]`` -> ``(x1, y1, x2, y2)``. Exact, no rounding."""
    return CornerBox(x1=b.x, y1=b.y, x2=b.x + b.w, y2=b.y + b.l)


def corners_to_xylw(c: CornerBox, subject_index: int = 0) -> SubjectBox:
    """Inverse of :func:`xylw_to_corners`."""
    return SubjectBox(
        x=c.x1, y=c.y1, l=c.y2 - c.y1, w=c.x2 - c.x1,
        subject_index=subject_index,
    )


def rescale_box(
    b: CornerBox,
    from_res: tuple[float, float],
    to_res: tuple[float, float],
) -> CornerBox:
    """Map box coordinates through a resolution change.

    Each coordinate is multiplied by the per-axis ratio and the result is
    clamped to the target resolution.
    """
    fw, fh = from_res
    tw, th = to_res
    if fw <= 0 or fh <= 0 or tw <= 0 or th <= 0:
        raise InvalidResolution(f"resolutions must be positive: {from_res} -> {to_res}")
    rx = tw / fw
    ry = th / fh
    clamp_x = lambda v: min(max(v, 0.0), float(tw))  # noqa: E731
    clamp_y = lambda v: min(max(v, 0.0), float(th))  # noqa: E731
    return CornerBox(
        x1=clamp_x(b.x1 * rx), y1=clamp_y(b.y1 * ry),
        x2=clamp_x(b.x2 * rx), y2=clamp_y(b.y2 * ry),
    )


def iou(a: CornerBox, b: CornerBox) -> float:
    """Intersection over union; 0.0 when the union has zero area."""
    ix1 = max(a.x1, b.x1)
    iy1 = max(a.y1, b.y1)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def round_half_away(v: float) -> int:
    """Round half away from zero (the boundary-rendering convention)."""
    return int(math.floor(v + 0.5)) if v >= 0 else int(math.ceil(v - 0.5))
