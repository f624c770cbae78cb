"""Face blurring from facial keypoints.

Regions come from the facial subset of a subject's keypoints; blurring
is pixelation (block-mean), which is deterministic, integer-exact, and
resistant to reversal at large block sizes. Pixels outside the given
regions are never touched, and blurring a second time with the same
block-aligned regions changes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import CornerBox, KeypointSet, is_face_part, round_half_away

MIN_FACE_POINTS = 3
DEFAULT_FACE_MARGIN = 0.25


@dataclass(frozen=True)
class FaceRegion:
    box: CornerBox
    subject_index: int


def face_region(
    kps: KeypointSet,
    margin: float,
    frame_w: float,
    frame_h: float,
) -> FaceRegion | None:
    """Smallest rectangle over a subject's valid facial keypoints.

    Expanded by ``margin`` (fraction of its own width/height) per side
    and clamped to the frame. Returns None when fewer than three facial
    points are valid -- too little evidence to call it a face.
    """
    xs: list[float] = []
    ys: list[float] = []
    for point, ok in zip(kps.points, kps.valid_mask):
        if ok and is_face_part(point.part_id):
            xs.append(point.x)
            ys.append(point.y)
    if len(xs) < MIN_FACE_POINTS:
        return None
    x_min, x_max = min(xs), max(xs)
    y_min, y_max = min(ys), max(ys)
    pad_x = margin * (x_max - x_min)
    pad_y = margin * (y_max - y_min)
    return FaceRegion(
        box=CornerBox(
            x1=max(0.0, x_min - pad_x),
            y1=max(0.0, y_min - pad_y),
            x2=min(float(frame_w), x_max + pad_x),
            y2=min(float(frame_h), y_max + pad_y),
        ),
        subject_index=kps.subject_index,
    )


def default_block(region: CornerBox) -> int:
    """Pixelation cell size for a region: max(8, width / 8)."""
    return max(8, int(region.width / 8))


def blur(
    frame: np.ndarray,
    regions: Iterable[FaceRegion | CornerBox],
    block: int = 8,
) -> np.ndarray:
    """Pixelate the given regions of a frame.

    Each region is tiled into block x block cells anchored at the
    region's top-left corner; every cell is replaced by its mean color
    (integer mean, halves rounded up). Returns a new array; the input is
    not modified. Pixels outside all regions are bit-identical.
    """
    if block < 2:
        raise ValueError(f"block must be >= 2: {block}")
    out = frame.copy()
    h, w = out.shape[:2]
    for region in regions:
        box = region.box if isinstance(region, FaceRegion) else region
        x1 = max(0, min(w, round_half_away(box.x1)))
        y1 = max(0, min(h, round_half_away(box.y1)))
        x2 = max(0, min(w, round_half_away(box.x2)))
        y2 = max(0, min(h, round_half_away(box.y2)))
        if x2 <= x1 or y2 <= y1:
            continue
        for cy in range(y1, y2, block):
            for cx in range(x1, x2, block):
                cell = out[cy:min(cy + block, y2), cx:min(cx + block, x2)]
                sums = cell.reshape(-1, cell.shape[-1]).astype(np.uint64).sum(axis=0)
                n = cell.shape[0] * cell.shape[1]
                mean = (sums + n // 2) // n  # integer mean, half up
                cell[:] = mean.astype(frame.dtype)
    return out


def blur_faces(
    frame: np.ndarray,
    subjects: Sequence[KeypointSet],
    margin: float = DEFAULT_FACE_MARGIN,
    block: int = 8,
) -> np.ndarray:
    """Convenience: derive face regions from subjects and pixelate them."""
    h, w = frame.shape[:2]
    regions = []
    for kps in subjects:
        region = face_region(kps, margin, w, h)
        if region is not None:
            regions.append(region)
    if not regions:
        return frame.copy()
    return blur(frame, regions, block)
