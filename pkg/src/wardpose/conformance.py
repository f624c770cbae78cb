"""Protocol conformance suite for backend implementations.

Runs a fixed battery of wire-level checks against any backend command.
The synthetic backend served as a subprocess must pass every check, and
external adapters are held to exactly the same battery.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clips import write_ppm
from .geometry import SubjectBox
from .protocol import (
    PROTOCOL_VERSION,
    BackendMessage,
    RecognitionWindow,
    WindowFrame,
    capabilities_payload,
    detect_request_payload,
    encode_message,
    frame_payload,
    parse_detect_response,
    parse_recognize_response,
    read_frame,
    decode_message,
    recognize_request_payload,
    write_frame,
)

CHECK_TIMEOUT = 10.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


class _Conn:
    """One raw protocol connection to a freshly spawned backend."""

    def __init__(self, command: Sequence[str]):
        self.proc = subprocess.Popen(
            list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        )
        self.next_id = 1

    def send(self, kind: str, payload: dict, request_id: int | None = None,
             version: int = PROTOCOL_VERSION) -> int:
        rid = self.next_id if request_id is None else request_id
        if request_id is None:
            self.next_id += 1
        else:
            self.next_id = max(self.next_id, request_id + 1)
        write_frame(self.proc.stdin, encode_message(
            BackendMessage(version, rid, kind, payload)
        ))
        return rid

    def send_raw(self, payload: bytes) -> None:
        write_frame(self.proc.stdin, payload)

    def recv(self) -> BackendMessage:
        return decode_message(read_frame(self.proc.stdout))

    def recv_raw(self) -> bytes:
        return read_frame(self.proc.stdout)

    def closed_cleanly(self) -> bool:
        try:
            read_frame(self.proc.stdout)
            return False
        except EOFError:
            return True
        except Exception:
            return True

    def close(self) -> None:
        for stream in (self.proc.stdin, self.proc.stdout):
            if stream:
                try:
                    stream.close()
                except OSError:
                    pass
        try:
            self.proc.wait(timeout=CHECK_TIMEOUT)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


def _make_frame(directory) -> str:
    """A tiny deterministic test frame: dark background, bright figure."""
    image = np.zeros((36, 64, 3), dtype=np.uint8)
    image[8:30, 24:40] = (220, 210, 200)
    path = str(directory / "conformance_frame.ppm")
    write_ppm(path, image)
    return path


def _window(frame_path: str, fps: int = 5) -> RecognitionWindow:
    box = SubjectBox(x=24.0, y=8.0, l=22.0, w=16.0, subject_index=0)
    frames = tuple(
        WindowFrame(frame_index=i, frame=frame_payload(frame_path), boxes=(box,))
        for i in range(fps)
    )
    return RecognitionWindow(fps=fps, window_end_index=fps - 1, frames=frames)


def run_conformance(command: Sequence[str], workdir) -> list[CheckResult]:
    """Run every conformance check against ``command``.

    ``workdir`` is a writable directory for fixture frames. Each check
    spawns a fresh connection so failures cannot cascade.
    """
    frame_path = _make_frame(workdir)
    checks = [
        ("handshake_accepts_v1", _check_handshake),
        ("handshake_refuses_other_version", _check_version_mismatch),
        ("detect_response_wellformed", _check_detect),
        ("detect_is_deterministic", _check_detect_deterministic),
        ("recognize_contract", _check_recognize),
        ("recognize_rejects_bad_window", _check_bad_window),
        ("malformed_request_gets_error_frame", _check_malformed),
        ("request_id_regression_closes", _check_id_regression),
        ("responses_echo_request_id", _check_id_echo),
    ]
    results = []
    for name, fn in checks:
        conn = _Conn(command)
        try:
            detail = fn(conn, frame_path)
            results.append(CheckResult(name, True, detail or ""))
        except AssertionError as exc:
            results.append(CheckResult(name, False, str(exc)))
        except Exception as exc:
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
        finally:
            conn.close()
    return results


def _handshake(conn: _Conn) -> BackendMessage:
    rid = conn.send("capabilities", capabilities_payload())
    reply = conn.recv()
    assert reply.request_id == rid, f"handshake echoed id {reply.request_id}, sent {rid}"
    return reply


def _check_handshake(conn: _Conn, frame_path: str) -> str:
    reply = _handshake(conn)
    assert reply.kind == "capabilities", f"expected capabilities reply, got {reply.kind}"
    assert reply.payload.get("version") == PROTOCOL_VERSION, \
        f"peer version {reply.payload.get('version')}"
    kinds = reply.payload.get("kinds", [])
    assert "detect" in kinds and "recognize" in kinds, f"kinds: {kinds}"
    return f"kinds={kinds}"


def _check_version_mismatch(conn: _Conn, frame_path: str) -> str:
    conn.send("capabilities", {"version": 99, "kinds": ["detect"]}, version=99)
    reply = conn.recv()
    assert reply.kind == "error", f"v99 handshake answered with {reply.kind}"
    return reply.payload.get("message", "")


def _check_detect(conn: _Conn, frame_path: str) -> str:
    _handshake(conn)
    rid = conn.send("detect", detect_request_payload(frame_path, 0, (64, 36)))
    reply = conn.recv()
    assert reply.kind == "detect", f"got {reply.kind}: {reply.payload}"
    assert reply.request_id == rid
    subjects = parse_detect_response(reply.payload)
    for s in subjects:
        for p in s.valid_points():
            assert 0 <= p.x <= 64 and 0 <= p.y <= 36, f"point out of bounds: ({p.x}, {p.y})"
    return f"{len(subjects)} subject(s)"


def _check_detect_deterministic(conn: _Conn, frame_path: str) -> str:
    _handshake(conn)
    payload = detect_request_payload(frame_path, 0, (64, 36))
    conn.send("detect", payload)
    first = conn.recv_raw()
    conn.send("detect", payload)
    second = conn.recv_raw()
    first_body = decode_message(first)
    second_body = decode_message(second)
    assert first_body.payload == second_body.payload, "same detect request, different payloads"
    return ""


def _check_recognize(conn: _Conn, frame_path: str) -> str:
    _handshake(conn)
    window = _window(frame_path)
    rid = conn.send("recognize", recognize_request_payload(window))
    reply = conn.recv()
    assert reply.kind == "recognize", f"got {reply.kind}: {reply.payload}"
    assert reply.request_id == rid
    predictions = parse_recognize_response(reply.payload)
    final_subjects = {b.subject_index for b in window.frames[-1].boxes}
    for pred in predictions:
        assert pred.subject_index in final_subjects, \
            f"prediction for subject {pred.subject_index} absent from final frame"
        for label, score in pred.scores.items():
            assert 0.0 <= score <= 1.0, f"{label.code} score {score}"
    return f"{len(predictions)} prediction(s)"


def _check_bad_window(conn: _Conn, frame_path: str) -> str:
    _handshake(conn)
    window = _window(frame_path)
    payload = recognize_request_payload(window)
    payload["frames"] = payload["frames"][:-1]  # one frame short of a second
    conn.send("recognize", payload)
    reply = conn.recv()
    assert reply.kind == "error", f"short window answered with {reply.kind}"
    return reply.payload.get("message", "")


def _check_malformed(conn: _Conn, frame_path: str) -> str:
    _handshake(conn)
    conn.send_raw(b"{this is not json")
    reply = conn.recv()
    assert reply.kind == "error", f"malformed frame answered with {reply.kind}"
    return reply.payload.get("message", "")


def _check_id_regression(conn: _Conn, frame_path: str) -> str:
    _handshake(conn)
    conn.send("detect", detect_request_payload(frame_path, 0, (64, 36)), request_id=10)
    conn.recv()
    conn.send("detect", detect_request_payload(frame_path, 1, (64, 36)), request_id=3)
    reply = conn.recv()
    assert reply.kind == "error", f"id regression answered with {reply.kind}"
    assert conn.closed_cleanly(), "connection stayed open after id regression"
    return ""


def _check_id_echo(conn: _Conn, frame_path: str) -> str:
    _handshake(conn)
    sent = [
        conn.send("detect", detect_request_payload(frame_path, i, (64, 36)))
        for i in range(3)
    ]
    got = [conn.recv().request_id for _ in sent]
    assert sorted(got) == sent, f"sent {sent}, got {got}"
    return ""
