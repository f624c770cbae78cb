"""Frame drawing primitives: rectangles and bitmap text.

Everything here writes only the pixels it says it writes, so callers
can reason about pixel-diff masks. Text uses a built-in 5x7 font
(uppercase; input is uppercased) and draws glyph pixels only -- no
background fill.
"""

from __future__ import annotations

import numpy as np

from .geometry import CornerBox, round_half_away

GLYPH_W = 5
GLYPH_H = 7
GLYPH_SPACING = 1

BOX_COLOR = (0, 255, 0)
TEXT_COLOR = (255, 255, 255)
WATERMARK_COLOR = (0, 128, 255)

# Each glyph is 7 rows of 5 bits, most significant bit leftmost.
_FONT: dict[str, tuple[int, ...]] = {
    "A": (0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001),
    "B": (0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110),
    "C": (0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110),
    "D": (0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110),
    "E": (0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111),
    "F": (0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000),
    "G": (0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111),
    "H": (0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001),
    "I": (0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110),
    "J": (0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100),
    "K": (0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001),
    "L": (0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111),
    "M": (0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001),
    "N": (0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001, 0b10001),
    "O": (0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110),
    "P": (0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000),
    "Q": (0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101),
    "R": (0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001),
    "S": (0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110),
    "T": (0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100),
    "U": (0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110),
    "V": (0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100),
    "W": (0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b11011, 0b10001),
    "X": (0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001),
    "Y": (0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100),
    "Z": (0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111),
    "0": (0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110),
    "1": (0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110),
    "2": (0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111),
    "3": (0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110),
    "4": (0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010),
    "5": (0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110),
    "6": (0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110),
    "7": (0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000),
    "8": (0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110),
    "9": (0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100),
    " ": (0, 0, 0, 0, 0, 0, 0),
    ".": (0, 0, 0, 0, 0, 0b00100, 0b00100),
    ":": (0, 0b00100, 0b00100, 0, 0b00100, 0b00100, 0),
    "/": (0b00001, 0b00010, 0b00010, 0b00100, 0b01000, 0b01000, 0b10000),
    "-": (0, 0, 0, 0b11111, 0, 0, 0),
    "_": (0, 0, 0, 0, 0, 0, 0b11111),
    "%": (0b11001, 0b11010, 0b00010, 0b00100, 0b01000, 0b01011, 0b10011),
}
_UNKNOWN = (0b11111, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11111)


def text_extent(text: str) -> tuple[int, int]:
    """(width, height) in pixels of the rendered text region."""
    if not text:
        return (0, GLYPH_H)
    width = len(text) * (GLYPH_W + GLYPH_SPACING) - GLYPH_SPACING
    return (width, GLYPH_H)


def draw_text(image: np.ndarray, text: str, x: int, y: int,
              color: tuple[int, int, int] = TEXT_COLOR) -> None:
    """Draw ``text`` in place with its top-left corner at (x, y).

    Only glyph pixels are written; pixels between and around glyphs are
    untouched. Glyph parts outside the frame are clipped.
    """
    h, w = image.shape[:2]
    cx = x
    for ch in text.upper():
        rows = _FONT.get(ch, _UNKNOWN)
        for dy, bits in enumerate(rows):
            py = y + dy
            if not 0 <= py < h:
                continue
            for dx in range(GLYPH_W):
                if bits & (1 << (GLYPH_W - 1 - dx)):
                    px = cx + dx
                    if 0 <= px < w:
                        image[py, px] = color
        cx += GLYPH_W + GLYPH_SPACING


def draw_box(image: np.ndarray, box: CornerBox,
             color: tuple[int, int, int] = BOX_COLOR, thickness: int = 1) -> None:
    """Draw a rectangle outline in place, clipped to the frame."""
    h, w = image.shape[:2]
    x1 = max(0, min(w, round_half_away(box.x1)))
    y1 = max(0, min(h, round_half_away(box.y1)))
    x2 = max(0, min(w, round_half_away(box.x2)))
    y2 = max(0, min(h, round_half_away(box.y2)))
    if x2 <= x1 or y2 <= y1:
        return
    t = max(1, thickness)
    image[y1:min(y1 + t, y2), x1:x2] = color
    image[max(y2 - t, y1):y2, x1:x2] = color
    image[y1:y2, x1:min(x1 + t, x2)] = color
    image[y1:y2, max(x2 - t, x1):x2] = color


def box_outline_mask(shape: tuple[int, ...], box: CornerBox, thickness: int = 1) -> np.ndarray:
    """Boolean mask of the pixels :func:`draw_box` would write."""
    before = np.zeros(shape[:2] + (3,), dtype=np.uint8)
    draw_box(before, box, color=(255, 255, 255), thickness=thickness)
    return before.any(axis=2)


def apply_watermark(image: np.ndarray) -> None:
    """Stamp the fixed processed-output marker (top-left corner block)."""
    image[0:2, 0:4] = WATERMARK_COLOR
