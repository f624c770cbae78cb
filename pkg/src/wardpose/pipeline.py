"""Offline and online recognition pipelines.

Offline mode processes a whole clip: detect every frame first (buffer
all boxes), then slide a one-second window over the buffered frames,
recognizing and rendering as it goes. Single-threaded and
bit-deterministic given a deterministic backend.

Online mode is a streaming pipeline of concurrent stages connected by
bounded FIFO queues::

    capture -> detect -> render        (frame path, order-preserving)
                     \\-> recognize     (window path, may drop under load)

Rendering never waits for recognition: it overlays whatever predictions
are currently available (subject to a validity horizon) so display
keeps up with the source. Under the default drop policy, recognition
windows that cannot be enqueued are discarded oldest-first and counted;
in strict mode the run aborts with BackpressureOverflow instead.
"""

from __future__ import annotations

import csv
import json
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .backend import check_window
from .clips import ClipManifest, load_frame, ppm_bytes, write_ppm
from .geometry import (
    KeypointSet,
    NoValidKeypoints,
    SubjectBox,
    bbox_from_keypoints,
    round_half_away,
    xylw_to_corners,
)
from .privacy import DEFAULT_FACE_MARGIN, blur_faces
from .protocol import (
    ActionPrediction,
    RecognitionWindow,
    WindowFrame,
    frame_payload,
)
from .render import (
    GLYPH_H,
    apply_watermark,
    draw_box,
    draw_text,
)

LOG_HEADER = ["frame_index", "subject_index", "label", "score", "x1", "y1", "x2", "y2"]
LINE_HEIGHT = GLYPH_H + 1


class ClipTooShort(ValueError):
    """Offline input must be strictly longer than one second."""


class SourceStalled(RuntimeError):
    """The frame source stopped producing before it was exhausted."""


class BackpressureOverflow(RuntimeError):
    """A bounded queue overflowed while the drop policy was disabled."""


@dataclass(frozen=True)
class FrameEnvelope:
    frame_index: int
    timestamp: float
    image: np.ndarray
    ref: str | None = None
    detections: tuple[tuple[SubjectBox, KeypointSet], ...] = ()


@dataclass(frozen=True)
class RunConfig:
    mode: str = "offline"
    fps: int = 25
    resolution: tuple[int, int] = (640, 360)
    stride: int = 0  # 0 -> per-mode default: 1 offline, fps online
    score_display_threshold: float = 0.5
    max_labels: int = 3
    min_box_area: float = 4.0
    min_keypoint_confidence: float = 0.05
    box_margin: float = 0.0
    blur_faces: bool = False
    blur_block: int = 8
    face_margin: float = DEFAULT_FACE_MARGIN
    overlay_horizon: int = 0  # 0 -> 2 * fps
    drop_policy: str = "drop"  # "drop" | "strict"
    detect_queue_capacity: int = 0  # 0 -> fps
    render_queue_capacity: int = 0  # 0 -> fps
    recognize_queue_capacity: int = 2
    source_stall_timeout: float = 10.0
    # Skip detection once the pipeline runs this many seconds behind the
    # source's own timeline (live sources only; pull sources never lag).
    detect_lag_budget: float = 1.0

    def effective_stride(self) -> int:
        if self.stride > 0:
            return self.stride
        return 1 if self.mode == "offline" else self.fps

    def effective_horizon(self) -> int:
        return self.overlay_horizon if self.overlay_horizon > 0 else 2 * self.fps


@dataclass
class RunReport:
    mode: str
    frames_processed: int = 0
    windows_recognized: int = 0
    windows_dropped: int = 0
    frames_detection_skipped: int = 0
    stale_overlay_frames: int = 0
    stale_overlay_intervals: list[tuple[int, int]] = field(default_factory=list)
    queue_capacity: dict[str, int] = field(default_factory=dict)
    max_queue_depth: dict[str, int] = field(default_factory=dict)
    recognize_latency_avg: float = 0.0
    recognize_latency_max: float = 0.0
    wall_time_seconds: float = 0.0

    def to_json(self) -> str:
        doc = dict(self.__dict__)
        doc["stale_overlay_intervals"] = [list(iv) for iv in self.stale_overlay_intervals]
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class LogRow:
    frame_index: int
    subject_index: int
    label_code: str
    score: float
    x1: float
    y1: float
    x2: float
    y2: float


def write_prediction_log(rows: Sequence[LogRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_HEADER)
        for r in rows:
            writer.writerow([
                r.frame_index, r.subject_index, r.label_code, _fmt(r.score),
                _fmt(r.x1), _fmt(r.y1), _fmt(r.x2), _fmt(r.y2),
            ])


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


# ---------------------------------------------------------------------------
# Sources


class ClipSource:
    """Frame source over a stored clip directory."""

    def __init__(self, manifest: ClipManifest):
        self.manifest = manifest
        self.fps = manifest.fps
        self.resolution = manifest.resolution

    def __iter__(self) -> Iterator[np.ndarray]:
        for i in range(self.manifest.frame_count):
            yield load_frame(self.manifest, i)

    def ref(self, index: int) -> str | None:
        return self.manifest.frames[index]


class ArraySource:
    """Frame source over in-memory arrays (tests, synthetic streams)."""

    def __init__(self, frames: Sequence[np.ndarray] | Iterator[np.ndarray],
                 fps: int, resolution: tuple[int, int]):
        self._frames = frames
        self.fps = fps
        self.resolution = resolution

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self._frames)

    def ref(self, index: int) -> None:
        return None


def synthetic_frames(count: int, resolution: tuple[int, int]) -> Iterator[np.ndarray]:
    """Cheap deterministic frames: flat gray varying with the index."""
    w, h = resolution
    for i in range(count):
        yield np.full((h, w, 3), 32 + (i % 8) * 4, dtype=np.uint8)


# ---------------------------------------------------------------------------
# Overlay state


@dataclass(frozen=True)
class OverlayEntry:
    prediction: ActionPrediction
    box: SubjectBox


class OverlayState:
    """Latest prediction per subject, expiring after a frame horizon."""

    def __init__(self, horizon: int):
        self.horizon = horizon
        self._entries: dict[int, OverlayEntry] = {}
        self._lock = threading.Lock()

    def update(self, predictions: Sequence[ActionPrediction],
               final_boxes: Sequence[SubjectBox]) -> None:
        boxes = {b.subject_index: b for b in final_boxes}
        with self._lock:
            for pred in predictions:
                box = boxes.get(pred.subject_index)
                if box is not None:
                    self._entries[pred.subject_index] = OverlayEntry(pred, box)

    def visible(self, frame_index: int) -> list[OverlayEntry]:
        """Entries usable at ``frame_index``, oldest dropped past the horizon."""
        with self._lock:
            live = []
            expired = []
            for key, entry in self._entries.items():
                age = frame_index - entry.prediction.window_end_index
                if age > self.horizon:
                    expired.append(key)
                elif age >= 0:
                    live.append(entry)
            for key in expired:
                del self._entries[key]
        return sorted(live, key=lambda e: e.prediction.subject_index)


def render_overlay(
    frame: np.ndarray,
    detections: Sequence[tuple[SubjectBox, KeypointSet]],
    overlay: OverlayState,
    frame_index: int,
    cfg: RunConfig,
) -> np.ndarray:
    """Draw subject boxes and current action labels onto a frame copy.

    Boxes below ``min_box_area`` are skipped. Each overlay prediction is
    attached to the box with its subject index (falling back to the
    nearest box centroid) and its top labels with scores at or above the
    display threshold are stacked just above the box. With nothing to
    draw, the returned copy is bit-identical to the input.
    """
    out = frame.copy()
    boxes = [b for b, _ in detections if b.area >= cfg.min_box_area]
    for box in boxes:
        draw_box(out, xylw_to_corners(box))
    if not boxes:
        return out
    for entry in overlay.visible(frame_index):
        box = _attach(entry, boxes)
        if box is None:
            continue
        labels = [
            (label, score)
            for label, score in entry.prediction.top(cfg.max_labels)
            if score >= cfg.score_display_threshold
        ]
        bx = max(0, round_half_away(box.x))
        by = round_half_away(box.y)
        for j, (label, score) in enumerate(labels):
            y = max(0, by - LINE_HEIGHT * (len(labels) - j))
            draw_text(out, f"{label.name} {score:.2f}", bx, y)
    return out


def _attach(entry: OverlayEntry, boxes: Sequence[SubjectBox]) -> SubjectBox | None:
    for box in boxes:
        if box.subject_index == entry.prediction.subject_index:
            return box
    # Fall back to nearest centroid; identity is only cosmetic here.
    ex = entry.box.x + entry.box.w / 2
    ey = entry.box.y + entry.box.l / 2
    return min(
        boxes,
        key=lambda b: (b.x + b.w / 2 - ex) ** 2 + (b.y + b.l / 2 - ey) ** 2,
        default=None,
    )


# ---------------------------------------------------------------------------
# Shared stage logic


def _detect_envelope(envelope: FrameEnvelope, detector, cfg: RunConfig,
                     resolution: tuple[int, int]) -> FrameEnvelope:
    ref = envelope.ref if envelope.ref is not None else ppm_bytes(envelope.image)
    subjects = detector.detect(ref, envelope.frame_index, resolution)
    pairs = []
    for kps in subjects:
        try:
            box = bbox_from_keypoints(
                kps, resolution[0], resolution[1],
                cfg.min_keypoint_confidence, cfg.box_margin,
            )
        except NoValidKeypoints:
            continue
        if box.area >= cfg.min_box_area:
            pairs.append((box, kps))
    return replace(envelope, detections=tuple(pairs))


def _window_payload(envelopes: Sequence[FrameEnvelope], fps: int) -> RecognitionWindow:
    frames = tuple(
        WindowFrame(
            frame_index=e.frame_index,
            frame=frame_payload(e.ref if e.ref is not None else ppm_bytes(e.image)),
            boxes=tuple(b for b, _ in e.detections),
        )
        for e in envelopes
    )
    window = RecognitionWindow(fps=fps, window_end_index=frames[-1].frame_index, frames=frames)
    check_window(window)
    return window


def _log_rows(predictions: Sequence[ActionPrediction],
              final: FrameEnvelope) -> list[LogRow]:
    boxes = {b.subject_index: b for b, _ in final.detections}
    rows = []
    for pred in sorted(predictions, key=lambda p: p.subject_index):
        box = boxes.get(pred.subject_index)
        if box is None:
            continue
        corners = xylw_to_corners(box)
        ranked = sorted(pred.scores.items(), key=lambda kv: (-kv[1], kv[0].code))
        for label, score in ranked:
            rows.append(LogRow(
                frame_index=pred.window_end_index,
                subject_index=pred.subject_index,
                label_code=label.code,
                score=score,
                x1=corners.x1, y1=corners.y1, x2=corners.x2, y2=corners.y2,
            ))
    return rows


def _finish_frame(envelope: FrameEnvelope, overlay: OverlayState, cfg: RunConfig,
                  stale: "_StaleTracker") -> np.ndarray:
    image = envelope.image
    if cfg.blur_faces:
        image = blur_faces(
            image, [k for _, k in envelope.detections],
            cfg.face_margin, cfg.blur_block,
        )
    visible = overlay.visible(envelope.frame_index)
    annotated = render_overlay(image, envelope.detections, overlay,
                               envelope.frame_index, cfg)
    apply_watermark(annotated)
    stale.observe(envelope.frame_index, bool(envelope.detections), bool(visible))
    return annotated


class _StaleTracker:
    """Frames shown with detections but no live prediction overlay."""

    def __init__(self, first_window_end: int):
        self.first_window_end = first_window_end
        self.count = 0
        self.intervals: list[tuple[int, int]] = []
        self._open: int | None = None
        self._last: int | None = None

    def observe(self, frame_index: int, has_detections: bool, has_overlay: bool) -> None:
        stale = (
            frame_index > self.first_window_end and has_detections and not has_overlay
        )
        if stale:
            self.count += 1
            if self._open is None:
                self._open = frame_index
            self._last = frame_index
        elif self._open is not None:
            self.intervals.append((self._open, self._last))
            self._open = None

    def finish(self) -> None:
        if self._open is not None:
            self.intervals.append((self._open, self._last))
            self._open = None


class _FrameWriter:
    """Numbered-PPM sink; doubles as a no-op when no directory is given."""

    def __init__(self, out_dir: str | Path | None,
                 extra_sink: Callable[[int, np.ndarray], None] | None = None):
        self.dir = Path(out_dir) if out_dir is not None else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
        self.extra = extra_sink

    def __call__(self, frame_index: int, image: np.ndarray) -> None:
        if self.dir is not None:
            write_ppm(self.dir / f"frame_{frame_index:06d}.ppm", image)
        if self.extra is not None:
            self.extra(frame_index, image)


# ---------------------------------------------------------------------------
# Offline mode


def run_offline(
    clip: ClipManifest,
    cfg: RunConfig,
    detector,
    recognizer,
    out_dir: str | Path | None = None,
    frame_sink: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[RunReport, list[LogRow]]:
    """Whole-clip processing: detect everything, then recognize and render.

    The clip must be strictly longer than one second at its own fps.
    Windows slide with the configured stride (default: every frame) and
    each window's predictions are applied before its final frame is
    rendered. Annotated frames carry the output watermark. Outputs are
    deterministic given a deterministic backend.
    """
    fps = clip.fps
    if clip.frame_count <= fps:
        raise ClipTooShort(
            f"clip {clip.clip_id!r} is {clip.frame_count / fps:.2f}s; "
            "offline mode needs strictly more than 1 second"
        )
    cfg = replace(cfg, mode="offline", fps=fps, resolution=clip.resolution)
    stride = cfg.effective_stride()
    started = time.monotonic()

    # Phase 1: detect and buffer every frame's boxes.
    envelopes: list[FrameEnvelope] = []
    for i in range(clip.frame_count):
        envelope = FrameEnvelope(
            frame_index=i, timestamp=i / fps,
            image=load_frame(clip, i), ref=clip.frames[i],
        )
        envelopes.append(_detect_envelope(envelope, detector, cfg, clip.resolution))

    # Phase 2: slide the one-second window; render in frame order.
    overlay = OverlayState(cfg.effective_horizon())
    stale = _StaleTracker(first_window_end=fps - 1)
    writer = _FrameWriter(Path(out_dir) / "frames" if out_dir else None, frame_sink)
    rows: list[LogRow] = []
    report = RunReport(mode="offline")
    latencies: list[float] = []
    next_fire = fps - 1
    for i, envelope in enumerate(envelopes):
        if i == next_fire:
            window = _window_payload(envelopes[i - fps + 1:i + 1], fps)
            t0 = time.monotonic()
            predictions = recognizer.recognize(window)
            latencies.append(time.monotonic() - t0)
            overlay.update(predictions, [b for b, _ in envelope.detections])
            rows.extend(_log_rows(predictions, envelope))
            report.windows_recognized += 1
            next_fire += stride
        writer(i, _finish_frame(envelope, overlay, cfg, stale))
        report.frames_processed += 1

    stale.finish()
    report.stale_overlay_frames = stale.count
    report.stale_overlay_intervals = stale.intervals
    if latencies:
        report.recognize_latency_avg = sum(latencies) / len(latencies)
        report.recognize_latency_max = max(latencies)
    report.wall_time_seconds = time.monotonic() - started
    if out_dir is not None:
        _write_outputs(Path(out_dir), report, rows)
    return report, rows


def _write_outputs(out_dir: Path, report: RunReport, rows: list[LogRow]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_prediction_log(rows, out_dir / "predictions.csv")
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")


# ---------------------------------------------------------------------------
# Online mode


class _Gauge:
    def __init__(self):
        self.value = 0
        self._lock = threading.Lock()

    def observe(self, v: int) -> None:
        with self._lock:
            if v > self.value:
                self.value = v


class _Stage:
    """Shared plumbing for the online run: queues, stop flag, errors."""

    SENTINEL = object()

    def __init__(self):
        self.stop = threading.Event()
        self.error: BaseException | None = None
        self._error_lock = threading.Lock()

    def fail(self, exc: BaseException) -> None:
        with self._error_lock:
            if self.error is None:
                self.error = exc
        self.stop.set()

    def put(self, q: queue.Queue, item, gauge: _Gauge) -> bool:
        while not self.stop.is_set():
            try:
                q.put(item, timeout=0.05)
                gauge.observe(q.qsize())
                return True
            except queue.Full:
                continue
        return False

    def get(self, q: queue.Queue, timeout: float | None = None):
        deadline = None if timeout is None else time.monotonic() + timeout
        while not self.stop.is_set():
            try:
                return q.get(timeout=0.05)
            except queue.Empty:
                if deadline is not None and time.monotonic() > deadline:
                    raise
        return self.SENTINEL


def run_online(
    source,
    cfg: RunConfig,
    detector,
    recognizer,
    out_dir: str | Path | None = None,
    frame_sink: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[RunReport, list[LogRow]]:
    """Streaming processing with concurrent capture/detect/recognize stages.

    ``source`` declares ``fps`` and ``resolution`` and iterates frames in
    order; ``ref(index)`` may supply a file reference per frame. Frames
    come out exactly in input order. Recognition fires once per full
    window at the configured stride and never blocks rendering; under
    the default drop policy an overloaded recognizer loses the oldest
    queued windows, which the report records.
    """
    fps = int(source.fps)
    resolution = tuple(source.resolution)
    cfg = replace(cfg, mode="online", fps=fps, resolution=resolution)
    stride = cfg.effective_stride()
    cap_detect = cfg.detect_queue_capacity or fps
    cap_render = cfg.render_queue_capacity or fps
    cap_windows = cfg.recognize_queue_capacity
    started = time.monotonic()

    stage = _Stage()
    q_detect: queue.Queue = queue.Queue(maxsize=cap_detect)
    q_render: queue.Queue = queue.Queue(maxsize=cap_render)
    q_windows: queue.Queue = queue.Queue(maxsize=cap_windows)
    gauges = {"detect": _Gauge(), "render": _Gauge(), "recognize": _Gauge()}

    report = RunReport(
        mode="online",
        queue_capacity={"detect": cap_detect, "render": cap_render,
                        "recognize": cap_windows},
    )
    overlay = OverlayState(cfg.effective_horizon())
    stale = _StaleTracker(first_window_end=fps - 1)
    writer = _FrameWriter(Path(out_dir) / "frames" if out_dir else None, frame_sink)
    rows: list[LogRow] = []
    rows_lock = threading.Lock()
    latencies: list[float] = []
    counters = {"skipped": 0, "dropped": 0, "recognized": 0}

    def capture() -> None:
        try:
            get_ref = getattr(source, "ref", lambda i: None)
            for i, image in enumerate(source):
                envelope = FrameEnvelope(
                    frame_index=i, timestamp=i / fps, image=image, ref=get_ref(i),
                )
                if not stage.put(q_detect, envelope, gauges["detect"]):
                    return
        except BaseException as exc:
            stage.fail(exc)
        finally:
            stage.put(q_detect, stage.SENTINEL, gauges["detect"])

    def detect() -> None:
        window_buf: deque[FrameEnvelope] = deque(maxlen=fps)
        next_fire = fps - 1
        try:
            while True:
                item = stage.get(q_detect)
                if item is stage.SENTINEL:
                    break
                envelope: FrameEnvelope = item
                lag = (time.monotonic() - started) - envelope.timestamp
                if cfg.drop_policy == "drop" and lag > cfg.detect_lag_budget:
                    # Running behind the source's timeline: skip detection,
                    # keep the frame flowing so display stays live.
                    counters["skipped"] += 1
                else:
                    envelope = _detect_envelope(envelope, detector, cfg, resolution)
                window_buf.append(envelope)
                if envelope.frame_index == next_fire:
                    if len(window_buf) == fps:
                        _enqueue_window(list(window_buf))
                    next_fire += stride
                if not stage.put(q_render, envelope, gauges["render"]):
                    return
        except BaseException as exc:
            stage.fail(exc)
        finally:
            # Render first so display finishes even while the recognizer
            # is still draining queued windows.
            stage.put(q_render, stage.SENTINEL, gauges["render"])
            stage.put(q_windows, stage.SENTINEL, gauges["recognize"])

    def _enqueue_window(envelopes: list[FrameEnvelope]) -> None:
        window = _window_payload(envelopes, fps)
        item = (window, envelopes[-1])
        try:
            q_windows.put_nowait(item)
            gauges["recognize"].observe(q_windows.qsize())
        except queue.Full:
            if cfg.drop_policy == "strict":
                raise BackpressureOverflow(
                    f"recognition queue full at window {window.window_end_index}"
                )
            try:
                q_windows.get_nowait()
                counters["dropped"] += 1
            except queue.Empty:
                pass
            try:
                q_windows.put_nowait(item)
                gauges["recognize"].observe(q_windows.qsize())
            except queue.Full:
                counters["dropped"] += 1

    def recognize() -> None:
        try:
            while True:
                item = stage.get(q_windows)
                if item is stage.SENTINEL:
                    break
                window, final = item
                t0 = time.monotonic()
                predictions = recognizer.recognize(window)
                latencies.append(time.monotonic() - t0)
                overlay.update(predictions, [b for b, _ in final.detections])
                with rows_lock:
                    rows.extend(_log_rows(predictions, final))
                counters["recognized"] += 1
        except BaseException as exc:
            stage.fail(exc)

    threads = [
        threading.Thread(target=capture, name="capture", daemon=True),
        threading.Thread(target=detect, name="detect", daemon=True),
        threading.Thread(target=recognize, name="recognize", daemon=True),
    ]
    for t in threads:
        t.start()

    try:
        while True:
            try:
                item = stage.get(q_render, timeout=cfg.source_stall_timeout)
            except queue.Empty:
                stage.fail(SourceStalled(
                    f"no frame within {cfg.source_stall_timeout}s"
                ))
                break
            if item is stage.SENTINEL:
                break
            envelope = item
            writer(envelope.frame_index, _finish_frame(envelope, overlay, cfg, stale))
            report.frames_processed += 1
    except BaseException as exc:
        stage.fail(exc)

    # Recognition may still be draining queued windows; let it finish
    # unless the run already failed.
    if stage.error is None:
        threads[0].join()
        threads[1].join()
        threads[2].join()
    stage.stop.set()
    for t in threads:
        t.join(timeout=0.5)

    stale.finish()
    report.windows_recognized = counters["recognized"]
    report.windows_dropped = counters["dropped"]
    report.frames_detection_skipped = counters["skipped"]
    report.stale_overlay_frames = stale.count
    report.stale_overlay_intervals = stale.intervals
    report.max_queue_depth = {name: g.value for name, g in gauges.items()}
    if latencies:
        report.recognize_latency_avg = sum(latencies) / len(latencies)
        report.recognize_latency_max = max(latencies)
    report.wall_time_seconds = time.monotonic() - started

    # Ctrl-C is a clean stop: keep the partial results and final report.
    if stage.error is not None and not isinstance(stage.error, KeyboardInterrupt):
        raise stage.error
    if out_dir is not None:
        _write_outputs(Path(out_dir), report, rows)
    return report, rows
