"""Clip storage: frame-directory clips with a line-oriented manifest.

A clip on disk is a directory of numbered image files plus a
``manifest.txt`` with ``key=value`` lines::

    clip_id=S001C001P001R001A041
    fps=25
    width=640
    height=360
    label=A043
    frame_pattern=frame_%06d.ppm

Frames are raw binary PPM (P6, maxval 255, RGB): codec-free, portable,
and byte-deterministic, so written clips can be diffed. A manifest's
``frames`` are ordered references (paths); the same reference may appear
more than once, which is how clip extension repeats boundary frames
without copying pixels. The manifest's ``resolution`` is authoritative:
frames whose stored size differs are resized on load.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .labels import ActionLabel, label_from_code


class EmptyClip(ValueError):
    """A clip with no frames where at least one is required."""


class ManifestError(ValueError):
    """A clip manifest file that cannot be parsed."""


DEFAULT_FRAME_PATTERN = "frame_%06d.ppm"


@dataclass(frozen=True)
class ClipManifest:
    clip_id: str
    frames: tuple[str, ...]
    fps: int
    resolution: tuple[int, int]
    label: ActionLabel | None = None

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValueError(f"fps must be > 0: {self.fps}")
        w, h = self.resolution
        if w <= 0 or h <= 0:
            raise ValueError(f"resolution must be positive: {self.resolution}")

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def duration_seconds(self) -> float:
        return len(self.frames) / self.fps


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(f"expected (H, W, 3) uint8 array, got {image.shape} {image.dtype}")
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def ppm_bytes(image: np.ndarray) -> bytes:
    """Serialize an (H, W, 3) uint8 array to in-memory PPM bytes."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(f"expected (H, W, 3) uint8 array, got {image.shape} {image.dtype}")
    h, w = image.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + image.tobytes()


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a binary PPM (P6, maxval 255) into an (H, W, 3) uint8 array."""
    data = Path(path).read_bytes()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+255\s", data)
    if m is None:
        raise ValueError(f"{path}: not a maxval-255 binary PPM")
    w, h = int(m.group(1)), int(m.group(2))
    pixels = data[m.end():]
    expected = w * h * 3
    if len(pixels) < expected:
        raise ValueError(f"{path}: truncated pixel data ({len(pixels)} < {expected})")
    return np.frombuffer(pixels[:expected], dtype=np.uint8).reshape(h, w, 3).copy()


def nearest_resize(image: np.ndarray, to_res: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize to (w, h). Deterministic, no interpolation."""
    tw, th = to_res
    h, w = image.shape[:2]
    if (w, h) == (tw, th):
        return image
    rows = np.minimum((np.arange(th) + 0.5) * h / th, h - 1).astype(np.intp)
    cols = np.minimum((np.arange(tw) + 0.5) * w / tw, w - 1).astype(np.intp)
    return image[rows][:, cols]


def load_frame(manifest: ClipManifest, index: int) -> np.ndarray:
    """Load frame ``index`` at the manifest's declared resolution."""
    image = read_ppm(manifest.frames[index])
    return nearest_resize(image, manifest.resolution)


def write_manifest_file(manifest: ClipManifest, directory: str | Path,
                        frame_pattern: str = DEFAULT_FRAME_PATTERN) -> Path:
    path = Path(directory) / "manifest.txt"
    w, h = manifest.resolution
    lines = [
        f"clip_id={manifest.clip_id}",
        f"fps={manifest.fps}",
        f"width={w}",
        f"height={h}",
        f"label={manifest.label.code if manifest.label else ''}",
        f"frame_pattern={frame_pattern}",
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_clip(manifest: ClipManifest, directory: str | Path) -> ClipManifest:
    """Materialize a clip: numbered PPM frames + manifest file.

    Frames are written at the manifest's declared resolution (resizing if
    the referenced files differ), so the output directory is always
    self-consistent. Returns a manifest pointing at the new files.
    """
    if not manifest.frames:
        raise EmptyClip(f"clip {manifest.clip_id!r} has no frames")
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    refs = []
    for i in range(manifest.frame_count):
        frame_path = out / (DEFAULT_FRAME_PATTERN % i)
        write_ppm(frame_path, load_frame(manifest, i))
        refs.append(str(frame_path))
    write_manifest_file(manifest, out)
    return replace(manifest, frames=tuple(refs))


def read_clip(directory: str | Path) -> ClipManifest:
    """Read a clip directory written by :func:`write_clip` (or compatible)."""
    directory = Path(directory)
    path = directory / "manifest.txt"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ManifestError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    missing = {"clip_id", "fps", "width", "height", "frame_pattern"} - fields.keys()
    if missing:
        raise ManifestError(f"{path}: missing keys: {sorted(missing)}")
    try:
        fps = int(fields["fps"])
        width = int(fields["width"])
        height = int(fields["height"])
    except ValueError as exc:
        raise ManifestError(f"{path}: non-integer fps/width/height") from exc
    label = label_from_code(fields["label"]) if fields.get("label") else None

    pattern = fields["frame_pattern"]
    frames: list[str] = []
    i = 0
    while True:
        frame_path = directory / (pattern % i)
        if not frame_path.exists():
            break
        frames.append(str(frame_path))
        i += 1
    if not frames:
        raise EmptyClip(f"{directory}: no frames matching {pattern!r}")
    return ClipManifest(
        clip_id=fields["clip_id"], frames=tuple(frames), fps=fps,
        resolution=(width, height), label=label,
    )
