"""Shared fixtures: deterministic clips, scripted backends, figure keypoints."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from wardpose.clips import ClipManifest, write_ppm
from wardpose.labels import ActionLabel


def frame_pixels(index: int, resolution: tuple[int, int]) -> np.ndarray:
    """Distinct, deterministic solid-color frame for a given index."""
    w, h = resolution
    color = (index * 31 % 251, index * 57 % 251, index * 89 % 251)
    return np.full((h, w, 3), color, dtype=np.uint8)


def make_clip(
    directory: Path,
    clip_id: str,
    n_frames: int,
    fps: int,
    resolution: tuple[int, int] = (32, 18),
    label: ActionLabel | None = None,
) -> ClipManifest:
    """Write a clip of distinct solid-color frames to ``directory``."""
    directory.mkdir(parents=True, exist_ok=True)
    refs = []
    for i in range(n_frames):
        path = directory / f"frame_{i:06d}.ppm"
        write_ppm(path, frame_pixels(i, resolution))
        refs.append(str(path))
    return ClipManifest(clip_id, tuple(refs), fps, resolution, label)


def person_points(
    cx: float, cy: float, height: float, confidence: float = 0.9,
) -> list[dict]:
    """Wire-format keypoints sketching one upright figure.

    Head landmarks sit in the top quarter (nose, eyes, ears: five facial
    parts), shoulders/hips/ankles below, so both bbox derivation and
    face-region extraction have something to chew on.
    """
    head_y = cy - height / 2
    quarter = height / 4
    pts = [
        (0, cx, head_y),                      # nose
        (14, cx - quarter / 4, head_y - 1),   # right eye
        (15, cx + quarter / 4, head_y - 1),   # left eye
        (16, cx - quarter / 2, head_y),       # right ear
        (17, cx + quarter / 2, head_y),       # left ear
        (1, cx, head_y + quarter / 2),        # neck
        (2, cx - quarter, head_y + quarter),  # right shoulder
        (5, cx + quarter, head_y + quarter),  # left shoulder
        (8, cx - quarter / 2, cy + quarter),  # right hip
        (11, cx + quarter / 2, cy + quarter),  # left hip
        (10, cx - quarter / 2, cy + height / 2),  # right ankle
        (13, cx + quarter / 2, cy + height / 2),  # left ankle
    ]
    return [
        {"part_id": pid, "x": max(0.0, x), "y": max(0.0, y), "confidence": confidence}
        for pid, x, y in pts
    ]


def make_script(
    detections: dict[int, list[dict]] | None = None,
    recognitions: dict[int, list[dict]] | None = None,
    default_recognition: dict[str, float] | None = None,
) -> dict:
    script: dict = {"version": 1}
    if detections is not None:
        script["detections"] = {str(k): v for k, v in detections.items()}
    if recognitions is not None:
        script["recognitions"] = {str(k): v for k, v in recognitions.items()}
    if default_recognition is not None:
        script["default_recognition"] = default_recognition
    return script


def write_script(script: dict, path: Path) -> Path:
    path.write_text(json.dumps(script, sort_keys=True), encoding="utf-8")
    return path


def subject_entry(subject_index: int, points: list[dict]) -> dict:
    return {"subject_index": subject_index, "points": points}


@pytest.fixture
def tiny_clip(tmp_path: Path) -> ClipManifest:
    return make_clip(tmp_path / "tiny", "clip_tiny", 15, 5, (32, 18))
