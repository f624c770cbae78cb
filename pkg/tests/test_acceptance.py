"""Acceptance suite: one test per release criterion, each printing a
[PASS]/[FAIL] line (run with ``pytest tests/test_acceptance.py -v -s``).

Everything here runs against the in-repo code and the scripted synthetic
backend only; no external component is required.
"""

import functools
import io
import random
import threading
import time

import numpy as np

from wardpose.backend import SyntheticBackend
from wardpose.clips import ClipManifest
from wardpose.dataset_prep import (
    SplitSpec,
    build_annotations,
    coco_json,
    export_coco,
    extend_clip,
    resample_clip,
    segment_clip,
)
from wardpose.geometry import (
    CornerBox,
    Keypoint,
    SubjectBox,
    bbox_from_keypoints,
    corners_to_xylw,
    iou,
    keypoint_set,
    xylw_to_corners,
)
from wardpose.labels import LABELS
from wardpose.metrics import ClassCounts, evaluate, macro_metrics
from wardpose.pipeline import (
    ArraySource,
    ClipSource,
    RunConfig,
    run_offline,
    run_online,
    synthetic_frames,
)
from wardpose.privacy import blur
from wardpose.protocol import (
    BackendMessage,
    ProtocolError,
    decode_message,
    encode_message,
    read_frame,
)

from _oracles import oracle_ap, oracle_classification, oracle_macro, oracle_match, oracle_minmax_rect
from conftest import make_clip, make_script, person_points, subject_entry
from test_metrics import random_instance


def criterion(name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"[FAIL] {name}")
                raise
            print(f"[PASS] {name}")
            return result
        return wrapper
    return decorate


# ---------------------------------------------------------------------------


@criterion("metrics oracle equivalence, 1000 random instances @ 1e-12, < 10 s")
def test_metrics_oracle_equivalence():
    rng = random.Random(515151)
    started = time.monotonic()
    for _ in range(1000):
        gt, preds = random_instance(rng)
        report = evaluate(gt, preds, 0.5)

        ref = oracle_match(gt, preds, 0.5)
        ref_aps = {lab: oracle_ap(flags, n_gt)
                   for lab, (_, flags, n_gt) in ref.items() if n_gt > 0}
        assert set(report.ap_per_class) == set(ref_aps)
        for lab, ap in ref_aps.items():
            assert abs(report.ap_per_class[lab] - ap) <= 1e-12
        assert abs(report.map - sum(ref_aps.values()) / len(ref_aps)) <= 1e-12

        ref_counts, _ = oracle_classification(gt, preds, 0.5)
        macro_p, macro_r, macro_f1 = oracle_macro(ref_counts)
        assert abs(report.macro_precision - macro_p) <= 1e-12
        assert abs(report.macro_recall - macro_r) <= 1e-12
        assert abs(report.macro_f1 - macro_f1) <= 1e-12
    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"oracle equivalence took {elapsed:.1f}s"


@criterion("precision/recall/F1 and macro-average fixtures exact")
def test_precision_recall_f1_fixtures():
    # Binary definitions.
    c = ClassCounts(tp=3, fp=1, fn=2)
    assert c.precision == 3 / 4
    assert c.recall == 3 / 5
    assert c.f1 == 2 * (3 / 4) * (3 / 5) / (3 / 4 + 3 / 5)

    # Equal per-class metrics: macro equals them.
    equal = {LABELS[0]: ClassCounts(1, 0, 0), LABELS[1]: ClassCounts(1, 1, 1)}
    macro = macro_metrics(equal)
    assert (macro.precision, macro.recall, macro.f1) == (0.75, 0.75, 0.75)

    # The anchored fixture: macroP 0.6, macroR 0.4 -> macroF1 0.48 exactly.
    asym = {
        LABELS[0]: ClassCounts(tp=2, fp=0, fn=3),   # P 1.0, R 0.4
        LABELS[1]: ClassCounts(tp=2, fp=8, fn=3),   # P 0.2, R 0.4
    }
    macro = macro_metrics(asym)
    assert abs(macro.precision - 0.6) <= 1e-15
    assert abs(macro.recall - 0.4) <= 1e-15
    assert abs(macro.f1 - 0.48) <= 1e-15

    # Harmonic-of-macros is NOT mean-of-per-class-F1 on asymmetric input.
    mean_of_f1 = sum(cc.f1 for cc in asym.values()) / 2
    assert abs(macro.f1 - mean_of_f1) > 0.05


@criterion("clip extension: 500 random cases + three worked traces")
def test_clip_extension_properties():
    def refs(n):
        return tuple(f"f{i}" for i in range(n))

    rng = random.Random(99)
    for _ in range(500):
        fps = rng.randint(1, 60)
        n = rng.randint(1, 5 * fps)
        clip = ClipManifest("c", refs(n), fps, (64, 36), None)
        out = extend_clip(clip)
        assert out.frame_count == max(n, 3 * fps)
        joined = "|".join(out.frames)
        assert "|".join(clip.frames) in joined  # contiguous, ordered

    # 90 @ 25 fps: already >= 3 s, unchanged.
    clip = ClipManifest("a", refs(90), 25, (64, 36), None)
    assert extend_clip(clip) is clip
    # 55 @ 25 fps: tail-padded to 75.
    clip = ClipManifest("b", refs(55), 25, (64, 36), None)
    out = extend_clip(clip)
    assert out.frame_count == 75
    assert out.frames[:55] == clip.frames
    assert set(out.frames[55:]) == {clip.frames[-1]}
    # 45 @ 30 fps: head-padded so the original ends at index 59, tail to 90.
    clip = ClipManifest("c", refs(45), 30, (64, 36), None)
    out = extend_clip(clip)
    assert out.frame_count == 90
    assert out.frames[:15] == (clip.frames[0],) * 15
    assert out.frames[15:60] == clip.frames
    assert out.frames[60:] == (clip.frames[-1],) * 30


@criterion("geometry: min/max oracle x1000, IoU=1/7 @ 1e-12, exact round-trip")
def test_geometry_acceptance():
    rng = random.Random(7654)
    for _ in range(1000):
        pairs = [(rng.uniform(0, 639), rng.uniform(0, 359))
                 for _ in range(rng.randint(1, 18))]
        kps = keypoint_set(0, [
            Keypoint(x, y, 1.0, part_id=i % 18) for i, (x, y) in enumerate(pairs)
        ])
        box = bbox_from_keypoints(kps, 640, 360, margin=0.0)
        x, y, l, w = oracle_minmax_rect(pairs, 640, 360, 0.0)
        assert (box.x, box.y, box.l, box.w) == (x, y, l, w)

    value = iou(CornerBox(0, 0, 10, 10), CornerBox(5, 5, 15, 15))
    assert abs(value - 1 / 7) <= 1e-12

    for _ in range(1000):
        b = SubjectBox(rng.randint(0, 500), rng.randint(0, 300),
                       rng.randint(0, 200), rng.randint(0, 200),
                       subject_index=rng.randint(0, 9))
        assert corners_to_xylw(xylw_to_corners(b), b.subject_index) == b


@criterion("dataset chain: 9 segments, deterministic 8:2 split, byte-stable COCO")
def test_dataset_chain(tmp_path):
    labels = [LABELS[0], LABELS[1], LABELS[2]]
    lengths = [15, 12, 8]  # 3 s, [2 s, 3 s), < 2 s at 5 fps
    clips = [
        make_clip(tmp_path / f"c{i}", f"vid{i}", lengths[i], 5, (32, 18),
                  label=labels[i])
        for i in range(3)
    ]
    prepared = [resample_clip(extend_clip(c), (32, 18), 5) for c in clips]
    segments = [s for clip in prepared for s in segment_clip(clip)]
    assert len(segments) == 9
    assert all(s.frame_count == 5 and s.frame_count / s.fps == 1.0 for s in segments)

    detector = SyntheticBackend(make_script(
        detections={7: [subject_entry(0, person_points(16, 9, 12))]},
    ))
    records, skips = build_annotations(prepared, detector)
    assert len(records) == 3 and not skips

    spec = SplitSpec(train_fraction=0.8, seed=11)
    first = export_coco(records, spec)
    second = export_coco(records, spec)
    assert coco_json(first[0]) == coco_json(second[0])
    assert coco_json(first[1]) == coco_json(second[1])

    for label in labels:
        total = sum(
            1 for doc in first for ann in doc["annotations"]
            if doc["categories"][ann["category_id"] - 1]["label"] == label.code
        )
        assert total == 1  # conserved per class across the partition


@criterion("offline determinism: byte-identical outputs; scripted A043 windows")
def test_offline_determinism(tmp_path):
    fps, n = 5, 15
    clip = make_clip(tmp_path / "clip", "fall", n, fps, (32, 18))
    backend = SyntheticBackend(make_script(
        detections={i: [subject_entry(0, person_points(16, 9, 8))]
                    for i in range(n)},
        recognitions={end: [{"subject_index": 0, "scores": {"A043": 0.97}}]
                      for end in range(2 * fps, n)},  # fall scripted from t=2 s
    ))

    def run(out):
        return run_offline(clip, RunConfig(), backend, backend, out_dir=out)

    _, rows = run(tmp_path / "r1")
    run(tmp_path / "r2")

    assert (tmp_path / "r1" / "predictions.csv").read_bytes() == \
        (tmp_path / "r2" / "predictions.csv").read_bytes()
    frames1 = sorted((tmp_path / "r1" / "frames").iterdir())
    frames2 = sorted((tmp_path / "r2" / "frames").iterdir())
    assert [p.name for p in frames1] == [p.name for p in frames2]
    for a, b in zip(frames1, frames2):
        assert a.read_bytes() == b.read_bytes()

    fall_windows = {r.frame_index for r in rows if r.label_code == "A043"}
    assert fall_windows == set(range(2 * fps, n))  # every window ending in [2 s, 3 s]


@criterion("online soak: 1500 ordered frames, 60 windows, bounded queues, clean stop")
def test_online_soak():
    n, fps = 1500, 25
    backend = SyntheticBackend(make_script(
        detections={i: [subject_entry(0, person_points(32, 18, 14))]
                    for i in range(n)},
        default_recognition={"A041": 0.9},
    ))
    seen: list[int] = []
    source = ArraySource(synthetic_frames(n, (64, 36)), fps, (64, 36))
    report, _ = run_online(source, RunConfig(), backend, backend,
                           frame_sink=lambda i, img: seen.append(i))

    assert seen == list(range(n))                     # exact count, exact order
    assert report.windows_recognized == 60            # default stride = fps
    assert report.windows_dropped == 0
    for name, depth in report.max_queue_depth.items():
        assert depth <= report.queue_capacity[name], f"queue {name} overflowed"
    for t in threading.enumerate():                   # clean shutdown
        assert t.name not in ("capture", "detect", "recognize")


@criterion("online soak with 2 s-delayed recognizer: render still emits 1500 frames")
def test_online_soak_delayed_recognizer():
    n, fps = 1500, 25
    inner = SyntheticBackend(make_script(
        detections={i: [subject_entry(0, person_points(32, 18, 14))]
                    for i in range(n)},
        default_recognition={"A041": 0.9},
    ))

    class Delayed:
        def recognize(self, window):
            time.sleep(2.0)
            return inner.recognize(window)

    seen: list[int] = []
    source = ArraySource(synthetic_frames(n, (64, 36)), fps, (64, 36))
    report, _ = run_online(source, RunConfig(recognize_queue_capacity=1),
                           inner, Delayed(), frame_sink=lambda i, img: seen.append(i))
    assert seen == list(range(n))
    assert report.windows_dropped >= 1
    assert report.stale_overlay_intervals  # staleness visible in the report


@criterion("mode equivalence: identical prediction logs at stride = fps")
def test_mode_equivalence(tmp_path):
    fps, n = 5, 20
    clip = make_clip(tmp_path / "clip", "eq", n, fps, (32, 18))
    backend = SyntheticBackend(make_script(
        detections={i: [subject_entry(0, person_points(16, 9, 8))]
                    for i in range(n)},
        recognitions={end: [{"subject_index": 0, "scores": {"A043": 0.8, "A041": 0.6}}]
                      for end in range(fps - 1, n, fps)},
    ))
    _, offline_rows = run_offline(clip, RunConfig(stride=fps), backend, backend)
    _, online_rows = run_online(ClipSource(clip), RunConfig(), backend, backend)
    assert offline_rows and offline_rows == online_rows


@criterion("privacy: diff mask within regions x100, idempotent, checkerboard exact")
def test_privacy_acceptance():
    rng = np.random.default_rng(4242)
    for trial in range(100):
        frame = rng.integers(0, 256, (36, 64, 3), dtype=np.uint8)
        x1 = int(rng.integers(0, 50))
        y1 = int(rng.integers(0, 26))
        region = CornerBox(x1, y1, x1 + int(rng.integers(2, 14)),
                           y1 + int(rng.integers(2, 10)))
        out = blur(frame, [region], block=int(rng.choice([2, 4, 8])))
        diff = (out != frame).any(axis=2)
        allowed = np.zeros_like(diff)
        allowed[int(region.y1):int(region.y2), int(region.x1):int(region.x2)] = True
        assert not diff[~allowed].any(), f"trial {trial}: pixels changed outside region"

    frame = rng.integers(0, 256, (32, 48, 3), dtype=np.uint8)
    regions = [CornerBox(0, 0, 16, 16), CornerBox(16, 8, 40, 32)]
    once = blur(frame, regions, 8)
    assert np.array_equal(blur(once, regions, 8), once)

    checker = np.zeros((16, 16, 3), dtype=np.uint8)
    ys, xs = np.mgrid[0:16, 0:16]
    checker[(xs + ys) % 2 == 1] = 255
    assert np.all(blur(checker, [CornerBox(0, 0, 16, 16)], 8) == 128)


@criterion("protocol: round-trip identity + 1000-case malformed fuzz, no hangs")
def test_protocol_acceptance():
    rng = random.Random(31337)
    kinds = ["capabilities", "detect", "recognize", "error"]
    for _ in range(500):
        msg = BackendMessage(
            1, rng.randint(1, 1_000_000), rng.choice(kinds),
            {"k": rng.random(), "list": [rng.randint(0, 9) for _ in range(5)],
             "text": "".join(chr(rng.randint(32, 0x2FA0)) for _ in range(10))},
        )
        assert decode_message(encode_message(msg)) == msg

    deadline = time.monotonic() + 30.0
    for case in range(1000):
        blob = bytes(rng.randint(0, 255) for _ in range(rng.randint(0, 80)))
        stream = io.BytesIO(
            rng.choice([
                blob,
                len(blob).to_bytes(4, "big") + blob[:-1] if blob else b"",
                (len(blob) + 17).to_bytes(4, "big") + blob,
                b"\xff\xff\xff\xff" + blob,
            ])
        )
        try:
            decode_message(read_frame(stream))
        except (ProtocolError, EOFError):
            pass
        assert time.monotonic() < deadline, f"fuzz case {case} wedged the host"
