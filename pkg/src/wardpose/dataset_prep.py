"""Dataset preparation: clip extension, resampling, segmentation,
keyframe annotation, and COCO-style export with a stratified split.

The preprocessing chain for one raw clip is::

    extend_clip -> resample_clip -> (keyframe annotation, segment_clip)

Extension normalizes short clips to exactly 3 seconds: clips already
3 s or longer pass through unchanged; clips of at least 2 s are padded
at the tail with copies of the last frame; shorter clips are padded at
the head with copies of the first frame so the original material ends
exactly at the 2-second mark, then tail-padded to 3 s. Annotation runs
a pose backend on the clip's middle frame and keeps the single
highest-confidence subject.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .clips import ClipManifest, EmptyClip
from .geometry import (
    CornerBox,
    KeypointSet,
    NoValidKeypoints,
    bbox_from_keypoints,
    xylw_to_corners,
)
from .labels import LABELS, ActionLabel, label_from_code

SEGMENT_SUFFIX = "_seg"
TARGET_SECONDS = 3


class InvalidTarget(ValueError):
    """Resample target resolution or fps is not positive."""


class WrongLength(ValueError):
    """Clip length does not match the exact-3-seconds precondition."""


class EmptyDataset(ValueError):
    """No annotation records to export."""


@dataclass(frozen=True)
class AnnotationRecord:
    """One subject position extracted from a preprocessed clip's keyframe."""

    video_name: str
    box: CornerBox
    label: ActionLabel
    segment_index: int


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1): {self.train_fraction}")


@dataclass(frozen=True)
class SkipEntry:
    clip_id: str
    reason: str


def extend_clip(v: ClipManifest) -> ClipManifest:
    """Pad a clip with boundary-frame copies to at least 3 seconds.

    Output frame count is ``max(frame_count, 3 * fps)`` and the original
    frames always appear contiguously, in order.
    """
    if not v.frames:
        raise EmptyClip(f"clip {v.clip_id!r} has no frames")
    t = v.frame_count
    full = TARGET_SECONDS * v.fps
    two_sec = 2 * v.fps
    if t >= full:
        return v
    if t >= two_sec:
        frames = v.frames + (v.frames[-1],) * (full - t)
    else:
        # Original material ends exactly at frame index 2*fps - 1.
        frames = (
            (v.frames[0],) * (two_sec - t)
            + v.frames
            + (v.frames[-1],) * (full - two_sec)
        )
    return ClipManifest(v.clip_id, frames, v.fps, v.resolution, v.label)


def temporal_index_map(src_count: int, src_fps: int, to_fps: int) -> list[int]:
    """Nearest-source-frame indices for a temporal resample.

    Output frame ``k`` is sourced from ``round(k * src_fps / to_fps)``
    (half rounded up), clamped to the valid source range. The output
    count preserves duration to within one target frame period.
    """
    dst_count = int(src_count * to_fps / src_fps + 0.5)
    return [
        min(int(k * src_fps / to_fps + 0.5), src_count - 1)
        for k in range(dst_count)
    ]


def resample_clip(v: ClipManifest, to_res: tuple[int, int], to_fps: int) -> ClipManifest:
    """Resample a clip to a target resolution and frame rate.

    Temporal resampling picks the nearest source frame for each target
    index (no blending); the spatial resize to ``to_res`` is recorded in
    the manifest and applied whenever frames are loaded or written.
    """
    tw, th = to_res
    if tw <= 0 or th <= 0 or to_fps <= 0:
        raise InvalidTarget(f"target must be positive: {to_res} @ {to_fps} fps")
    if not v.frames:
        raise EmptyClip(f"clip {v.clip_id!r} has no frames")
    if to_res == v.resolution and to_fps == v.fps:
        return v
    frames = tuple(v.frames[i] for i in temporal_index_map(v.frame_count, v.fps, to_fps))
    return ClipManifest(v.clip_id, frames, to_fps, (tw, th), v.label)


def segment_clip(v: ClipManifest) -> list[ClipManifest]:
    """Cut an exactly-3-second clip into three 1-second segments."""
    full = TARGET_SECONDS * v.fps
    if v.frame_count != full:
        raise WrongLength(
            f"clip {v.clip_id!r} has {v.frame_count} frames, expected exactly {full}"
        )
    segments = []
    for k in range(TARGET_SECONDS):
        frames = v.frames[k * v.fps:(k + 1) * v.fps]
        segments.append(ClipManifest(
            f"{v.clip_id}{SEGMENT_SUFFIX}{k}", frames, v.fps, v.resolution, v.label,
        ))
    return segments


def keyframe_index(v: ClipManifest) -> int:
    """Index of the clip's middle frame (floor of count/2)."""
    if not v.frames:
        raise EmptyClip(f"clip {v.clip_id!r} has no frames")
    return v.frame_count // 2


def keyframe(v: ClipManifest) -> str:
    """Frame reference of the clip's middle frame."""
    return v.frames[keyframe_index(v)]


def build_annotations(
    clips: Sequence[ClipManifest],
    detector,
    min_confidence: float = 0.05,
    margin: float = 0.0,
) -> tuple[list[AnnotationRecord], list[SkipEntry]]:
    """Annotate each clip with its keyframe's highest-confidence subject.

    ``detector`` is any object with a ``detect(frame_ref, frame_index,
    resolution) -> list[KeypointSet]`` method (see the backend module).
    Clips where detection yields nothing usable are reported as skips,
    never silently dropped. One record per clip: the corpus is
    single-subject, so only the top-confidence subject is kept.
    """
    records: list[AnnotationRecord] = []
    skips: list[SkipEntry] = []
    for clip in clips:
        if clip.label is None:
            skips.append(SkipEntry(clip.clip_id, "clip has no action label"))
            continue
        idx = keyframe_index(clip)
        subjects: list[KeypointSet] = detector.detect(clip.frames[idx], idx, clip.resolution)
        best = _top_subject(subjects, min_confidence)
        if best is None:
            skips.append(SkipEntry(clip.clip_id, "no subject detected on keyframe"))
            continue
        try:
            w, h = clip.resolution
            box = xylw_to_corners(bbox_from_keypoints(best, w, h, min_confidence, margin))
        except NoValidKeypoints:
            skips.append(SkipEntry(clip.clip_id, "no keypoints above confidence threshold"))
            continue
        records.append(AnnotationRecord(
            video_name=clip.clip_id,
            box=box,
            label=clip.label,
            segment_index=idx // clip.fps,
        ))
    return records, skips


def _top_subject(subjects: Iterable[KeypointSet], min_confidence: float) -> KeypointSet | None:
    best = None
    best_score = -1.0
    for s in subjects:
        score = s.mean_confidence()
        if score > best_score and any(
            ok and p.confidence >= min_confidence
            for p, ok in zip(s.points, s.valid_mask)
        ):
            best, best_score = s, score
    return best


def split_records(
    records: Sequence[AnnotationRecord], split: SplitSpec,
) -> tuple[list[AnnotationRecord], list[AnnotationRecord]]:
    """Stratified train/val partition, deterministic under the seed.

    Per class, records are shuffled with a seed derived from
    ``(split.seed, label code)`` and the first ``round(n * fraction)``
    go to train. Every record lands in exactly one side.
    """
    by_label: dict[ActionLabel, list[AnnotationRecord]] = {}
    for rec in records:
        by_label.setdefault(rec.label, []).append(rec)
    train: list[AnnotationRecord] = []
    val: list[AnnotationRecord] = []
    for label in sorted(by_label):
        group = list(by_label[label])
        rng = random.Random(f"{split.seed}:{label.code}")
        rng.shuffle(group)
        n_train = int(len(group) * split.train_fraction + 0.5)
        train.extend(group[:n_train])
        val.extend(group[n_train:])
    train.sort(key=lambda r: r.video_name)
    val.sort(key=lambda r: r.video_name)
    return train, val


def _coco_document(records: Sequence[AnnotationRecord]) -> dict:
    images = []
    annotations = []
    name_to_id: dict[str, int] = {}
    category_id = {lab.code: i + 1 for i, lab in enumerate(LABELS)}
    for rec in sorted(records, key=lambda r: r.video_name):
        if rec.video_name not in name_to_id:
            name_to_id[rec.video_name] = len(name_to_id) + 1
            w, h = 640, 360
            images.append({
                "id": name_to_id[rec.video_name],
                "file_name": rec.video_name,
                "width": w,
                "height": h,
            })
        box = rec.box
        annotations.append({
            "id": len(annotations) + 1,
            "image_id": name_to_id[rec.video_name],
            "category_id": category_id[rec.label.code],
            "bbox": [box.x1, box.y1, box.width, box.height],
            "area": box.area,
            "iscrowd": 0,
            "segment_index": rec.segment_index,
        })
    categories = [
        {"id": i + 1, "name": lab.name, "label": lab.code}
        for i, lab in enumerate(LABELS)
    ]
    return {"images": images, "annotations": annotations, "categories": categories}


def export_coco(
    records: Sequence[AnnotationRecord], split: SplitSpec,
) -> tuple[dict, dict]:
    """COCO-style (train, val) documents with a stratified 8:2-style split.

    Boxes are exported in ``[x, y, width, height]`` order against the
    640x360 post-resample frames. Deterministic under the split seed:
    serializing the returned documents with ``coco_json`` is
    byte-identical across runs.
    """
    if not records:
        raise EmptyDataset("no annotation records to export")
    train, val = split_records(records, split)
    return _coco_document(train), _coco_document(val)


def coco_json(document: Mapping) -> str:
    """Canonical serialization for COCO documents (stable byte output)."""
    return json.dumps(document, sort_keys=True, separators=(",", ":")) + "\n"


ANNOTATION_CSV_HEADER = ["video_name", "x1", "y1", "x2", "y2", "label", "segment_index"]


def write_annotation_csv(records: Sequence[AnnotationRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANNOTATION_CSV_HEADER)
        for rec in records:
            b = rec.box
            writer.writerow([
                rec.video_name,
                _fmt(b.x1), _fmt(b.y1), _fmt(b.x2), _fmt(b.y2),
                rec.label.code, rec.segment_index,
            ])


def read_annotation_csv(path: str | Path) -> list[AnnotationRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ANNOTATION_CSV_HEADER:
            raise ValueError(f"{path}: bad or missing header row: {header}")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 7:
                raise ValueError(f"{path}:{row_no}: expected 7 columns, got {len(row)}")
            name, x1, y1, x2, y2, code, seg = row
            records.append(AnnotationRecord(
                video_name=name,
                box=CornerBox(float(x1), float(y1), float(x2), float(y2)),
                label=label_from_code(code),
                segment_index=int(seg),
            ))
    return records


def _fmt(v: float) -> str:
    # Integers render without a trailing ".0" so CSVs stay diffable.
    return str(int(v)) if float(v).is_integer() else repr(float(v))
