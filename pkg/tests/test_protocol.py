import io
import random
import string

import pytest

from wardpose.geometry import Keypoint, SubjectBox, keypoint_set
from wardpose.labels import LABELS, label_from_code
from wardpose.protocol import (
    PROTOCOL_VERSION,
    ActionPrediction,
    BackendMessage,
    ProtocolError,
    RecognitionWindow,
    WindowFrame,
    box_from_wire,
    box_to_wire,
    decode_message,
    detect_response_payload,
    encode_message,
    frame_payload,
    keypointset_from_wire,
    keypointset_to_wire,
    parse_detect_response,
    parse_recognize_request,
    parse_recognize_response,
    prediction_from_wire,
    prediction_to_wire,
    read_frame,
    recognize_request_payload,
    recognize_response_payload,
    write_frame,
)


def random_message(rng: random.Random) -> BackendMessage:
    kind = rng.choice(["capabilities", "detect", "recognize", "error"])
    payload = {
        "n": rng.randint(0, 1000),
        "s": "".join(rng.choice(string.printable) for _ in range(rng.randint(0, 30))),
        "nested": {"a": [rng.random() for _ in range(rng.randint(0, 5))]},
    }
    return BackendMessage(PROTOCOL_VERSION, rng.randint(1, 10_000), kind, payload)


class TestFraming:
    def test_round_trip(self):
        buf = io.BytesIO()
        write_frame(buf, b"hello")
        buf.seek(0)
        assert read_frame(buf) == b"hello"

    def test_eof_on_clean_close(self):
        with pytest.raises(EOFError):
            read_frame(io.BytesIO(b""))

    def test_truncated_header(self):
        with pytest.raises(ProtocolError):
            read_frame(io.BytesIO(b"\x00\x00"))

    def test_truncated_payload(self):
        buf = io.BytesIO()
        write_frame(buf, b"hello")
        data = buf.getvalue()[:-2]
        with pytest.raises(ProtocolError):
            read_frame(io.BytesIO(data))

    def test_oversize_length_rejected(self):
        buf = io.BytesIO(b"\xff\xff\xff\xff")
        with pytest.raises(ProtocolError):
            read_frame(buf)


class TestMessageCodec:
    def test_encode_decode_identity_randomized(self):
        rng = random.Random(99)
        for _ in range(500):
            msg = random_message(rng)
            assert decode_message(encode_message(msg)) == msg

    def test_canonical_bytes(self):
        msg = BackendMessage(1, 5, "detect", {"b": 1, "a": 2})
        assert encode_message(msg) == encode_message(
            BackendMessage(1, 5, "detect", {"a": 2, "b": 1}))

    def test_rejects_not_json(self):
        with pytest.raises(ProtocolError) as exc_info:
            decode_message(b"\x80garbage")
        assert exc_info.value.raw == b"\x80garbage"

    def test_rejects_missing_fields(self):
        with pytest.raises(ProtocolError):
            decode_message(b'{"version": 1, "kind": "detect"}')

    def test_rejects_unknown_kind(self):
        with pytest.raises(ProtocolError):
            decode_message(b'{"version":1,"request_id":1,"kind":"dance","payload":{}}')

    def test_rejects_bool_version(self):
        with pytest.raises(ProtocolError):
            decode_message(b'{"version":true,"request_id":1,"kind":"detect","payload":{}}')

    def test_rejects_negative_request_id(self):
        with pytest.raises(ProtocolError):
            decode_message(b'{"version":1,"request_id":-3,"kind":"detect","payload":{}}')


class TestPayloads:
    def test_keypointset_round_trip(self):
        kps = keypoint_set(2, [Keypoint(1.5, 2.5, 0.75, 0), Keypoint(3, 4, 0.5, 17)])
        assert keypointset_from_wire(keypointset_to_wire(kps)) == kps

    def test_keypointset_drops_invalid_points(self):
        from wardpose.geometry import KeypointSet
        kps = KeypointSet(0, (Keypoint(1, 1, 0.9, 0), Keypoint(2, 2, 0.9, 1)),
                          (True, False))
        wire = keypointset_to_wire(kps)
        assert len(wire["points"]) == 1

    def test_malformed_keypointset(self):
        with pytest.raises(ProtocolError):
            keypointset_from_wire({"subject_index": 0, "points": [{"x": 1}]})

    def test_box_round_trip(self):
        box = SubjectBox(x=1, y=2, l=30, w=40, subject_index=3)
        assert box_from_wire(box_to_wire(box)) == box

    def test_prediction_round_trip(self):
        pred = ActionPrediction(0, {label_from_code("A043"): 0.97}, 49)
        assert prediction_from_wire(prediction_to_wire(pred)) == pred

    def test_prediction_validation(self):
        with pytest.raises(ValueError):
            ActionPrediction(0, {}, 10)
        with pytest.raises(ValueError):
            ActionPrediction(0, {label_from_code("A041"): 1.5}, 10)

    def test_prediction_top_ordering(self):
        pred = ActionPrediction(0, {
            label_from_code("A041"): 0.5,
            label_from_code("A043"): 0.9,
            label_from_code("A044"): 0.5,
        }, 10)
        top = pred.top(2)
        assert top[0][0].code == "A043"
        assert top[1][0].code == "A041"  # tie broken by code

    def test_recognize_round_trip(self):
        frames = tuple(
            WindowFrame(i, frame_payload(f"/tmp/f{i}.ppm"),
                        (SubjectBox(1, 2, 3, 4, subject_index=0),))
            for i in range(5)
        )
        window = RecognitionWindow(5, 4, frames)
        parsed = parse_recognize_request(recognize_request_payload(window))
        assert parsed == window

    def test_detect_response_round_trip(self):
        subjects = [keypoint_set(0, [Keypoint(5, 6, 0.9, 0)])]
        assert parse_detect_response(detect_response_payload(subjects)) == subjects

    def test_recognize_response_round_trip(self):
        preds = [ActionPrediction(1, {LABELS[0]: 0.25}, 24)]
        assert parse_recognize_response(recognize_response_payload(preds)) == preds

    def test_inline_frame_payload(self):
        payload = frame_payload(b"P6 raw bytes")
        assert payload["format"] == "ppm"
        assert "inline" in payload
