import numpy as np
import pytest

from wardpose.clips import (
    ClipManifest,
    EmptyClip,
    ManifestError,
    load_frame,
    nearest_resize,
    ppm_bytes,
    read_clip,
    read_ppm,
    write_clip,
    write_ppm,
)
from wardpose.labels import label_from_code

from conftest import frame_pixels, make_clip


class TestPpm:
    def test_round_trip(self, tmp_path):
        image = frame_pixels(3, (7, 5))
        write_ppm(tmp_path / "f.ppm", image)
        assert np.array_equal(read_ppm(tmp_path / "f.ppm"), image)

    def test_bytes_match_file(self, tmp_path):
        image = frame_pixels(9, (4, 4))
        write_ppm(tmp_path / "f.ppm", image)
        assert (tmp_path / "f.ppm").read_bytes() == ppm_bytes(image)

    def test_rejects_wrong_shape(self, tmp_path):
        with pytest.raises(ValueError):
            write_ppm(tmp_path / "f.ppm", np.zeros((4, 4), dtype=np.uint8))

    def test_rejects_truncated(self, tmp_path):
        (tmp_path / "bad.ppm").write_bytes(b"P6\n4 4\n255\nxx")
        with pytest.raises(ValueError):
            read_ppm(tmp_path / "bad.ppm")


class TestResize:
    def test_identity_is_same_object_shape(self):
        image = frame_pixels(0, (8, 6))
        assert nearest_resize(image, (8, 6)) is image

    def test_downscale_halves(self):
        image = np.zeros((4, 4, 3), dtype=np.uint8)
        image[:2, :2] = 255
        small = nearest_resize(image, (2, 2))
        assert small.shape == (2, 2, 3)
        assert small[0, 0, 0] == 255 and small[1, 1, 0] == 0

    def test_upscale(self):
        image = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
        big = nearest_resize(image, (4, 4))
        assert big.shape == (4, 4, 3)
        assert np.array_equal(big[0, 0], image[0, 0])
        assert np.array_equal(big[3, 3], image[1, 1])


class TestClipRoundTrip:
    def test_write_then_read(self, tmp_path):
        clip = make_clip(tmp_path / "src", "clipA", 6, 3, (16, 9),
                         label=label_from_code("A043"))
        stored = write_clip(clip, tmp_path / "out")
        loaded = read_clip(tmp_path / "out")
        assert loaded.clip_id == "clipA"
        assert loaded.fps == 3
        assert loaded.resolution == (16, 9)
        assert loaded.label == label_from_code("A043")
        assert loaded.frame_count == 6
        for i in range(6):
            assert np.array_equal(load_frame(loaded, i), load_frame(stored, i))

    def test_write_resizes_to_declared_resolution(self, tmp_path):
        clip = make_clip(tmp_path / "src", "clipB", 2, 2, (16, 9))
        shrunk = ClipManifest("clipB", clip.frames, clip.fps, (8, 4), None)
        stored = write_clip(shrunk, tmp_path / "out")
        assert load_frame(stored, 0).shape == (4, 8, 3)

    def test_duplicate_refs_materialize(self, tmp_path):
        clip = make_clip(tmp_path / "src", "clipC", 2, 2, (8, 4))
        padded = ClipManifest("clipC", clip.frames + (clip.frames[-1],) * 3,
                              2, (8, 4), None)
        stored = write_clip(padded, tmp_path / "out")
        assert stored.frame_count == 5
        assert np.array_equal(load_frame(stored, 4), load_frame(stored, 1))

    def test_empty_clip_rejected(self, tmp_path):
        clip = ClipManifest("empty", (), 5, (8, 4), None)
        with pytest.raises(EmptyClip):
            write_clip(clip, tmp_path / "out")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ManifestError):
            read_clip(tmp_path)

    def test_bad_manifest_line(self, tmp_path):
        (tmp_path / "manifest.txt").write_text("clip_id\n", encoding="utf-8")
        with pytest.raises(ManifestError):
            read_clip(tmp_path)

    def test_bad_label_rejected(self, tmp_path):
        (tmp_path / "manifest.txt").write_text(
            "clip_id=x\nfps=5\nwidth=8\nheight=4\nlabel=A999\nframe_pattern=f%d.ppm\n",
            encoding="utf-8",
        )
        write_ppm(tmp_path / "f0.ppm", frame_pixels(0, (8, 4)))
        with pytest.raises(Exception):
            read_clip(tmp_path)

    def test_manifest_validation(self):
        with pytest.raises(ValueError):
            ClipManifest("x", ("a",), 0, (8, 4), None)
        with pytest.raises(ValueError):
            ClipManifest("x", ("a",), 5, (0, 4), None)
