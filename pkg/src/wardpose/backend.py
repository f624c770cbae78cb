"""Backend implementations and transport.

A backend is anything with ``detect`` and ``recognize``:

* ``SyntheticBackend`` -- deterministic, scripted; used for tests,
  demos, and as the reference implementation of the wire contract.
* ``RemoteBackend`` -- client for a backend subprocess speaking the
  length-prefixed protocol on its standard streams.

``serve`` adapts any in-core backend to the wire, so the synthetic
backend can also run as a subprocess::

    python -m wardpose.backend --script script.json

The host never blocks forever: every outstanding request ends in a
response, a BackendTimeout, or a ChannelClosed.
"""

from __future__ import annotations

import json
import subprocess
import sys
import threading
from pathlib import Path
from typing import BinaryIO, Sequence

from .geometry import KeypointSet
from .labels import UnknownLabel, label_from_code
from .protocol import (
    PROTOCOL_VERSION,
    ActionPrediction,
    BackendMessage,
    ProtocolError,
    RecognitionWindow,
    capabilities_payload,
    decode_message,
    detect_request_payload,
    detect_response_payload,
    encode_message,
    error_payload,
    keypointset_from_wire,
    parse_detect_response,
    parse_recognize_request,
    parse_recognize_response,
    read_frame,
    recognize_request_payload,
    recognize_response_payload,
    write_frame,
    write_message,
)

DEFAULT_TIMEOUT = 5.0


class BackendError(RuntimeError):
    """The backend reported an error or sent something unusable."""

    def __init__(self, message: str, raw: bytes | None = None):
        super().__init__(message)
        self.raw = raw


class BackendTimeout(BackendError):
    """No response within the configured timeout."""


class ChannelClosed(BackendError):
    """The connection closed while a response was still expected."""


class VersionMismatch(BackendError):
    """Handshake failed: peer speaks an incompatible protocol version."""


class BackendUnavailable(BackendError):
    """The backend could not be started or the handshake never completed."""


class BadWindow(ValueError):
    """A recognition window that does not span exactly one second."""


class BadScript(ValueError):
    """A synthetic-backend script that fails validation."""


class BadEndpoint(ValueError):
    """A backend endpoint string with an unrecognized scheme."""


def check_window(window: RecognitionWindow) -> None:
    if len(window.frames) != window.fps:
        raise BadWindow(
            f"window must hold exactly fps={window.fps} frames, got {len(window.frames)}"
        )
    indices = [f.frame_index for f in window.frames]
    if indices != sorted(indices) or len(set(indices)) != len(indices):
        raise BadWindow("window frame indices must be strictly increasing")
    if indices[-1] != window.window_end_index:
        raise BadWindow(
            f"window_end_index {window.window_end_index} != last frame index {indices[-1]}"
        )


# ---------------------------------------------------------------------------
# Synthetic backend


class SyntheticBackend:
    """Deterministic scripted detector/recognizer.

    The script is a JSON document::

        {
          "version": 1,
          "detections": {"<frame_index>": [<keypoint set>, ...], ...},
          "recognitions": {"<window_end_index>": [<prediction>, ...], ...},
          "default_recognition": {"<label code>": <score>, ...}
        }

    Unscripted frame indices detect nothing. Unscripted window ends fall
    back to ``default_recognition`` (applied to every subject in the
    window's final frame) or, absent that, predict nothing. Identical
    inputs always produce identical responses.
    """

    def __init__(self, script: dict):
        self._detections: dict[int, list[KeypointSet]] = {}
        self._recognitions: dict[int, list[dict]] = {}
        self._default_scores: dict | None = None
        self._load(script)

    @classmethod
    def from_file(cls, path: str | Path) -> "SyntheticBackend":
        try:
            script = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise BadScript(f"cannot load script {path}: {exc}") from exc
        return cls(script)

    def _load(self, script: dict) -> None:
        if not isinstance(script, dict):
            raise BadScript("script must be a JSON object")
        if script.get("version", 1) != 1:
            raise BadScript(f"unsupported script version: {script.get('version')}")
        try:
            for key, subjects in script.get("detections", {}).items():
                self._detections[int(key)] = [keypointset_from_wire(s) for s in subjects]
        except (ValueError, ProtocolError) as exc:
            raise BadScript(f"bad detections entry: {exc}") from exc
        try:
            for key, preds in script.get("recognitions", {}).items():
                self._recognitions[int(key)] = list(preds)
            default = script.get("default_recognition")
            if default is not None:
                for code, score in default.items():
                    label_from_code(code)
                    if not 0.0 <= float(score) <= 1.0:
                        raise ValueError(f"score outside [0, 1]: {score}")
                self._default_scores = dict(default)
        except (ValueError, UnknownLabel, AttributeError) as exc:
            raise BadScript(f"bad recognitions entry: {exc}") from exc

    def detect(self, frame_ref, frame_index: int, resolution) -> list[KeypointSet]:
        return list(self._detections.get(frame_index, []))

    def recognize(self, window: RecognitionWindow) -> list[ActionPrediction]:
        check_window(window)
        final_subjects = [b.subject_index for b in window.frames[-1].boxes]
        scripted = self._recognitions.get(window.window_end_index)
        if scripted is not None:
            out = []
            for entry in scripted:
                try:
                    scores = {
                        label_from_code(code): float(s)
                        for code, s in entry["scores"].items()
                    }
                    subject = int(entry.get("subject_index", 0))
                except (KeyError, ValueError, UnknownLabel) as exc:
                    raise BadScript(f"bad scripted prediction: {exc}") from exc
                if subject in final_subjects:
                    out.append(ActionPrediction(subject, scores, window.window_end_index))
            return out
        if self._default_scores is not None:
            scores = {
                label_from_code(code): float(s)
                for code, s in self._default_scores.items()
            }
            return [
                ActionPrediction(s, dict(scores), window.window_end_index)
                for s in final_subjects
            ]
        return []

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# Server side: speak the wire protocol for any in-core backend


def serve(backend, rfile: BinaryIO, wfile: BinaryIO) -> None:
    """Answer protocol requests until the channel closes.

    Protocol violations (bad version, non-increasing request_id,
    unparseable frames) are answered with an error frame and close the
    connection; per-request failures are answered with an error frame
    and the connection stays up.
    """
    last_id = 0
    while True:
        try:
            raw = read_frame(rfile)
        except EOFError:
            return
        except ProtocolError as exc:
            _send_error(wfile, 0, str(exc))
            return
        try:
            msg = decode_message(raw)
        except ProtocolError as exc:
            _send_error(wfile, 0, str(exc))
            return
        if msg.version != PROTOCOL_VERSION:
            _send_error(wfile, msg.request_id, f"unsupported protocol version {msg.version}",
                        field_name="version")
            return
        if msg.request_id <= last_id:
            _send_error(
                wfile, msg.request_id,
                f"request_id {msg.request_id} not greater than {last_id}",
                field_name="request_id",
            )
            return
        last_id = msg.request_id
        try:
            if msg.kind == "capabilities":
                reply = BackendMessage(PROTOCOL_VERSION, msg.request_id, "capabilities",
                                       capabilities_payload())
            elif msg.kind == "detect":
                reply = _serve_detect(backend, msg)
            elif msg.kind == "recognize":
                reply = _serve_recognize(backend, msg)
            else:
                _send_error(wfile, msg.request_id, f"kind {msg.kind!r} not servable",
                            field_name="kind")
                continue
        except (ProtocolError, BadWindow, BadScript) as exc:
            _send_error(wfile, msg.request_id, str(exc))
            continue
        except Exception as exc:  # keep the channel alive on backend bugs
            _send_error(wfile, msg.request_id, f"backend failure: {exc}")
            continue
        write_message(wfile, reply)


def _serve_detect(backend, msg: BackendMessage) -> BackendMessage:
    payload = msg.payload
    frame = payload.get("frame")
    if not isinstance(frame, dict) or not ({"path", "inline"} & frame.keys()):
        raise ProtocolError("detect request missing 'frame' reference")
    try:
        frame_index = int(payload["frame_index"])
        resolution = tuple(payload.get("resolution", (0, 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad detect request: {exc}") from exc
    ref = frame.get("path", frame)
    subjects = backend.detect(ref, frame_index, resolution)
    return BackendMessage(PROTOCOL_VERSION, msg.request_id, "detect",
                          detect_response_payload(subjects))


def _serve_recognize(backend, msg: BackendMessage) -> BackendMessage:
    window = parse_recognize_request(msg.payload)
    predictions = backend.recognize(window)
    return BackendMessage(PROTOCOL_VERSION, msg.request_id, "recognize",
                          recognize_response_payload(predictions))


def _send_error(wfile: BinaryIO, request_id: int, message: str,
                field_name: str | None = None) -> None:
    try:
        write_message(wfile, BackendMessage(
            PROTOCOL_VERSION, request_id, "error", error_payload(message, field_name),
        ))
    except (OSError, ValueError):
        pass


# ---------------------------------------------------------------------------
# Client side


class RemoteBackend:
    """Client for a backend subprocess on its standard streams.

    A dedicated reader thread matches responses to pending requests by
    request_id, so out-of-order responses are fine. ``detect`` and
    ``recognize`` may be called from any thread; request ids are
    allocated under a lock.
    """

    def __init__(self, command: Sequence[str], handshake_timeout: float = DEFAULT_TIMEOUT,
                 request_timeout: float = DEFAULT_TIMEOUT):
        self._timeout = request_timeout
        self._lock = threading.Lock()
        self._next_id = 1
        self._pending: dict[int, _Pending] = {}
        self._closed = False
        try:
            self._proc = subprocess.Popen(
                list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise BackendUnavailable(f"cannot start backend {command!r}: {exc}") from exc
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        try:
            self._handshake(handshake_timeout)
        except BackendError:
            self.close()
            raise

    def _handshake(self, timeout: float) -> None:
        try:
            reply = self._request("capabilities", capabilities_payload(), timeout)
        except BackendTimeout as exc:
            # A silent peer during the handshake counts as a dead channel.
            raise ChannelClosed(f"no handshake reply within {timeout}s") from exc
        if reply.kind == "error":
            message = reply.payload.get("message", "")
            if reply.payload.get("field") == "version" or "version" in message:
                raise VersionMismatch(message or "peer refused our protocol version")
            raise BackendUnavailable(f"handshake refused: {message}")
        peer_version = reply.payload.get("version")
        if peer_version != PROTOCOL_VERSION:
            raise VersionMismatch(
                f"peer protocol version {peer_version}, host speaks {PROTOCOL_VERSION}"
            )

    def detect(self, frame_ref, frame_index: int, resolution) -> list[KeypointSet]:
        reply = self._request(
            "detect", detect_request_payload(frame_ref, frame_index, resolution),
            self._timeout,
        )
        if reply.kind == "error":
            raise BackendError(f"detect failed: {reply.payload.get('message')}")
        return parse_detect_response(reply.payload)

    def recognize(self, window: RecognitionWindow) -> list[ActionPrediction]:
        check_window(window)
        reply = self._request(
            "recognize", recognize_request_payload(window), self._timeout,
        )
        if reply.kind == "error":
            raise BackendError(f"recognize failed: {reply.payload.get('message')}")
        return parse_recognize_response(reply.payload)

    def _request(self, kind: str, payload: dict, timeout: float) -> BackendMessage:
        with self._lock:
            if self._closed:
                raise ChannelClosed("connection already closed")
            request_id = self._next_id
            self._next_id += 1
            pending = _Pending()
            self._pending[request_id] = pending
        msg = BackendMessage(PROTOCOL_VERSION, request_id, kind, payload)
        try:
            write_frame(self._proc.stdin, encode_message(msg))
        except (OSError, ValueError) as exc:
            error = ChannelClosed(f"write failed: {exc}")
            self._fail_all(error)
            raise error from exc
        if not pending.event.wait(timeout):
            with self._lock:
                self._pending.pop(request_id, None)
            raise BackendTimeout(f"no response to request {request_id} within {timeout}s")
        if pending.error is not None:
            raise pending.error
        assert pending.reply is not None
        return pending.reply

    def _read_loop(self) -> None:
        try:
            while True:
                raw = read_frame(self._proc.stdout)
                try:
                    msg = decode_message(raw)
                except ProtocolError as exc:
                    self._fail_all(BackendError(f"malformed response: {exc}", raw=exc.raw))
                    return
                with self._lock:
                    pending = self._pending.pop(msg.request_id, None)
                if pending is None:
                    # Unattributable error frames (id 0) or stale ids are fatal:
                    # we can no longer trust the stream's bookkeeping.
                    self._fail_all(BackendError(
                        f"response for unknown request_id {msg.request_id}", raw=raw,
                    ))
                    return
                pending.reply = msg
                pending.event.set()
        except EOFError:
            self._fail_all(ChannelClosed("backend closed the connection"))
        except (ProtocolError, OSError) as exc:
            raw = exc.raw if isinstance(exc, ProtocolError) else None
            self._fail_all(BackendError(f"unreadable response stream: {exc}", raw=raw))

    def _fail_all(self, error: BackendError) -> None:
        with self._lock:
            self._closed = True
            pending_now = list(self._pending.values())
            self._pending.clear()
        for p in pending_now:
            p.error = error
            p.event.set()

    def close(self) -> None:
        with self._lock:
            self._closed = True
        if self._proc.stdin:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self) -> "RemoteBackend":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class _Pending:
    __slots__ = ("event", "reply", "error")

    def __init__(self):
        self.event = threading.Event()
        self.reply: BackendMessage | None = None
        self.error: BackendError | None = None


def open_backend(endpoint: str, handshake_timeout: float = DEFAULT_TIMEOUT,
                 request_timeout: float = DEFAULT_TIMEOUT):
    """Resolve a backend endpoint string.

    ``synthetic:<script path>`` loads an in-process scripted backend;
    ``exec:<command line>`` spawns a subprocess speaking the wire
    protocol on its standard streams.
    """
    scheme, _, rest = endpoint.partition(":")
    if scheme == "synthetic" and rest:
        return SyntheticBackend.from_file(rest)
    if scheme == "exec" and rest:
        return RemoteBackend(rest.split(), handshake_timeout, request_timeout)
    raise BadEndpoint(f"unrecognized backend endpoint: {endpoint!r}")


def main(argv: Sequence[str] | None = None) -> int:
    """Serve a synthetic backend on stdin/stdout (subprocess entry)."""
    import argparse

    parser = argparse.ArgumentParser(
        prog="wardpose.backend",
        description="Serve a scripted synthetic backend over the wire protocol.",
    )
    parser.add_argument("--script", required=True, help="path to a backend script JSON file")
    args = parser.parse_args(argv)
    backend = SyntheticBackend.from_file(args.script)
    serve(backend, sys.stdin.buffer, sys.stdout.buffer)
    return 0


if __name__ == "__main__":
    sys.exit(main())
