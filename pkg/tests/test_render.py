import numpy as np

from wardpose.geometry import CornerBox
from wardpose.render import (
    GLYPH_H,
    apply_watermark,
    box_outline_mask,
    draw_box,
    draw_text,
    text_extent,
)


def blank(w=64, h=36):
    return np.full((h, w, 3), 10, dtype=np.uint8)


class TestDrawBox:
    def test_outline_only(self):
        frame = blank()
        draw_box(frame, CornerBox(10, 5, 30, 20))
        diff = (frame != 10).any(axis=2)
        assert diff[5, 10] and diff[5, 29] and diff[19, 10]
        assert not diff[10, 15]  # interior untouched
        assert not diff[0, 0]

    def test_mask_matches_draw(self):
        frame = blank()
        draw_box(frame, CornerBox(3, 3, 12, 12))
        mask = box_outline_mask(frame.shape, CornerBox(3, 3, 12, 12))
        assert np.array_equal((frame != 10).any(axis=2), mask)

    def test_clipped_at_edges(self):
        frame = blank(16, 16)
        draw_box(frame, CornerBox(-5, -5, 40, 40))
        assert (frame != 10).any()

    def test_degenerate_box_draws_nothing(self):
        frame = blank()
        draw_box(frame, CornerBox(5, 5, 5, 5))
        assert np.array_equal(frame, blank())


class TestDrawText:
    def test_pixels_confined_to_extent(self):
        frame = blank()
        draw_text(frame, "A043 0.97", 2, 3)
        w, h = text_extent("A043 0.97")
        diff = (frame != 10).any(axis=2)
        ys, xs = np.nonzero(diff)
        assert ys.min() >= 3 and ys.max() < 3 + h
        assert xs.min() >= 2 and xs.max() < 2 + w

    def test_lowercase_renders_as_uppercase(self):
        a, b = blank(), blank()
        draw_text(a, "fall", 1, 1)
        draw_text(b, "FALL", 1, 1)
        assert np.array_equal(a, b)

    def test_clipping_off_frame(self):
        frame = blank(8, 8)
        draw_text(frame, "WWWW", -3, -3)  # partially off-frame, must not raise
        draw_text(frame, "WWWW", 6, 6)

    def test_extent_math(self):
        assert text_extent("") == (0, GLYPH_H)
        assert text_extent("AB") == (11, GLYPH_H)


class TestWatermark:
    def test_fixed_region(self):
        frame = blank()
        apply_watermark(frame)
        diff = (frame != 10).any(axis=2)
        ys, xs = np.nonzero(diff)
        assert ys.max() < 2 and xs.max() < 4
