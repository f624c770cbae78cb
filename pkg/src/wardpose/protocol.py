"""Versioned wire protocol between the pipeline host and inference backends.

Wire format (both directions)::

    [4-byte big-endian uint32 length][length bytes of UTF-8 JSON]

Every message carries ``version``, ``request_id``, ``kind``, and a
kind-specific ``payload`` object. Kinds are ``capabilities`` (the
handshake), ``detect``, ``recognize``, and ``error``. Request ids are
strictly increasing per connection and responses echo the id of the
request they answer; an error frame that cannot be attributed to a
request uses id 0. Encoding is canonical (sorted keys, no whitespace),
so identical messages are identical bytes.

Frames are referenced by file path by default; small images may be
inlined as base64 instead. One second is defined as exactly ``fps``
frames at the stream's declared fps; no wall-clock coupling.
"""

from __future__ import annotations

import base64
import json
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Mapping, Sequence

from .geometry import Keypoint, KeypointSet, SubjectBox
from .labels import ActionLabel, label_from_code

PROTOCOL_VERSION = 1
KINDS = ("capabilities", "detect", "recognize", "error")
MAX_MESSAGE_BYTES = 16 * 1024 * 1024

_HEADER = struct.Struct("!I")


class ProtocolError(ValueError):
    """A frame or message that violates the wire contract.

    ``raw`` retains the offending payload bytes when available.
    """

    def __init__(self, message: str, raw: bytes | None = None):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class BackendMessage:
    version: int
    request_id: int
    kind: str
    payload: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ActionPrediction:
    """Per-subject scored action labels over one recognition window."""

    subject_index: int
    scores: dict[ActionLabel, float]
    window_end_index: int

    def __post_init__(self) -> None:
        if not self.scores:
            raise ValueError("a prediction must carry at least one score")
        for label, s in self.scores.items():
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"score for {label.code} outside [0, 1]: {s}")

    def top(self, k: int = 1) -> list[tuple[ActionLabel, float]]:
        """Highest-scoring entries, ties broken by label code."""
        ranked = sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0].code))
        return ranked[:k]


@dataclass(frozen=True)
class WindowFrame:
    """One frame of a recognition window: its index, reference, and boxes."""

    frame_index: int
    frame: dict
    boxes: tuple[SubjectBox, ...]


@dataclass(frozen=True)
class RecognitionWindow:
    """Exactly one second of frames (fps of them) ending at window_end_index."""

    fps: int
    window_end_index: int
    frames: tuple[WindowFrame, ...]


# ---------------------------------------------------------------------------
# Framing


def write_frame(stream: BinaryIO, payload: bytes) -> None:
    stream.write(_HEADER.pack(len(payload)))
    stream.write(payload)
    stream.flush()


def read_frame(stream: BinaryIO) -> bytes:
    """Read one length-prefixed frame.

    Raises EOFError on a clean close (no header bytes) and ProtocolError
    on truncation or an oversized length prefix.
    """
    header = stream.read(_HEADER.size)
    if not header:
        raise EOFError("peer closed the connection")
    if len(header) < _HEADER.size:
        raise ProtocolError(f"truncated header: {len(header)} bytes", raw=header)
    (length,) = _HEADER.unpack(header)
    if length > MAX_MESSAGE_BYTES:
        raise ProtocolError(f"frame length {length} exceeds {MAX_MESSAGE_BYTES}")
    payload = b""
    while len(payload) < length:
        chunk = stream.read(length - len(payload))
        if not chunk:
            raise ProtocolError(
                f"truncated payload: expected {length} bytes, got {len(payload)}",
                raw=payload,
            )
        payload += chunk
    return payload


def encode_message(msg: BackendMessage) -> bytes:
    body = {
        "version": msg.version,
        "request_id": msg.request_id,
        "kind": msg.kind,
        "payload": msg.payload,
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_message(payload: bytes) -> BackendMessage:
    try:
        body = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"message body is not valid JSON: {exc}", raw=payload) from exc
    if not isinstance(body, dict):
        raise ProtocolError("message body must be a JSON object", raw=payload)
    for key in ("version", "request_id", "kind"):
        if key not in body:
            raise ProtocolError(f"message missing field {key!r}", raw=payload)
    version = body["version"]
    request_id = body["request_id"]
    kind = body["kind"]
    if not isinstance(version, int) or isinstance(version, bool):
        raise ProtocolError("field 'version' must be an integer", raw=payload)
    if not isinstance(request_id, int) or isinstance(request_id, bool) or request_id < 0:
        raise ProtocolError("field 'request_id' must be a non-negative integer", raw=payload)
    if kind not in KINDS:
        raise ProtocolError(f"unknown kind {kind!r}", raw=payload)
    raw_payload = body.get("payload", {})
    if not isinstance(raw_payload, dict):
        raise ProtocolError("field 'payload' must be an object", raw=payload)
    return BackendMessage(version, request_id, kind, raw_payload)


def write_message(stream: BinaryIO, msg: BackendMessage) -> None:
    write_frame(stream, encode_message(msg))


def read_message(stream: BinaryIO) -> BackendMessage:
    return decode_message(read_frame(stream))


# ---------------------------------------------------------------------------
# Payload schemas


def frame_payload(frame_ref: str | bytes) -> dict:
    """A frame passed by path (str) or inline (raw image bytes)."""
    if isinstance(frame_ref, bytes):
        return {"inline": base64.b64encode(frame_ref).decode("ascii"), "format": "ppm"}
    return {"path": str(frame_ref)}


def capabilities_payload() -> dict:
    return {"version": PROTOCOL_VERSION, "kinds": ["detect", "recognize"]}


def detect_request_payload(frame_ref: str | bytes, frame_index: int,
                           resolution: tuple[int, int]) -> dict:
    return {
        "frame": frame_payload(frame_ref),
        "frame_index": frame_index,
        "resolution": [resolution[0], resolution[1]],
    }


def keypointset_to_wire(kps: KeypointSet) -> dict:
    points = [
        {"part_id": p.part_id, "x": p.x, "y": p.y, "confidence": p.confidence}
        for p, ok in zip(kps.points, kps.valid_mask) if ok
    ]
    return {"subject_index": kps.subject_index, "points": points}


def keypointset_from_wire(obj: Mapping) -> KeypointSet:
    try:
        subject_index = int(obj["subject_index"])
        points = tuple(
            Keypoint(
                x=float(p["x"]), y=float(p["y"]),
                confidence=float(p["confidence"]), part_id=int(p["part_id"]),
            )
            for p in obj["points"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed keypoint set: {exc}") from exc
    return KeypointSet(subject_index, points, (True,) * len(points))


def detect_response_payload(subjects: Sequence[KeypointSet]) -> dict:
    return {"subjects": [keypointset_to_wire(s) for s in subjects]}


def parse_detect_response(payload: Mapping) -> list[KeypointSet]:
    subjects = payload.get("subjects")
    if not isinstance(subjects, list):
        raise ProtocolError("detect response missing 'subjects' list")
    return [keypointset_from_wire(s) for s in subjects]


def box_to_wire(b: SubjectBox) -> dict:
    return {"subject_index": b.subject_index, "x": b.x, "y": b.y, "l": b.l, "w": b.w}


def box_from_wire(obj: Mapping) -> SubjectBox:
    try:
        return SubjectBox(
            x=float(obj["x"]), y=float(obj["y"]),
            l=float(obj["l"]), w=float(obj["w"]),
            subject_index=int(obj["subject_index"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed box: {exc}") from exc


def recognize_request_payload(window: RecognitionWindow) -> dict:
    return {
        "fps": window.fps,
        "window_end_index": window.window_end_index,
        "frames": [
            {
                "frame_index": f.frame_index,
                "frame": f.frame,
                "boxes": [box_to_wire(b) for b in f.boxes],
            }
            for f in window.frames
        ],
    }


def parse_recognize_request(payload: Mapping) -> RecognitionWindow:
    try:
        fps = int(payload["fps"])
        end = int(payload["window_end_index"])
        frames = tuple(
            WindowFrame(
                frame_index=int(f["frame_index"]),
                frame=dict(f.get("frame", {})),
                boxes=tuple(box_from_wire(b) for b in f.get("boxes", [])),
            )
            for f in payload["frames"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed recognize request: {exc}") from exc
    return RecognitionWindow(fps=fps, window_end_index=end, frames=frames)


def prediction_to_wire(pred: ActionPrediction) -> dict:
    return {
        "subject_index": pred.subject_index,
        "window_end_index": pred.window_end_index,
        "scores": {label.code: s for label, s in sorted(pred.scores.items())},
    }


def prediction_from_wire(obj: Mapping) -> ActionPrediction:
    try:
        scores = {
            label_from_code(code): float(s) for code, s in obj["scores"].items()
        }
        return ActionPrediction(
            subject_index=int(obj["subject_index"]),
            scores=scores,
            window_end_index=int(obj["window_end_index"]),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ProtocolError(f"malformed prediction: {exc}") from exc


def recognize_response_payload(predictions: Sequence[ActionPrediction]) -> dict:
    return {"predictions": [prediction_to_wire(p) for p in predictions]}


def parse_recognize_response(payload: Mapping) -> list[ActionPrediction]:
    predictions = payload.get("predictions")
    if not isinstance(predictions, list):
        raise ProtocolError("recognize response missing 'predictions' list")
    return [prediction_from_wire(p) for p in predictions]


def error_payload(message: str, field_name: str | None = None) -> dict:
    payload = {"message": message}
    if field_name:
        payload["field"] = field_name
    return payload
