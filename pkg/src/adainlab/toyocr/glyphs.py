"""Fixed 5x7 bitmap font for the synthetic word images."""

from __future__ import annotations

import numpy as np

ALPHABET = "0123456789ABCDEF"

_PATTERNS = {
    "0": (" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "),
    "1": ("  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "),
    "2": (" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"),
    "3": ("#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "),
    "4": ("   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "),
    "5": ("#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "),
    "6": ("  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "),
    "7": ("#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "),
    "8": (" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "),
    "9": (" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "),
    "A": (" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"),
    "B": ("#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "),
    "C": (" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "),
    "D": ("#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "),
    "E": ("#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"),
    "F": ("#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "),
}

GLYPH_H = 7
GLYPH_W = 5


def glyph_bitmap(ch: str) -> np.ndarray:
    """(7, 5) boolean ink mask for one character."""
    rows = _PATTERNS[ch.upper()]
    return np.array([[c == "#" for c in row] for row in rows], dtype=bool)


def thicken(bitmap: np.ndarray) -> np.ndarray:
    """One-pixel dilation to the right and down (stroke-weight jitter)."""
    out = bitmap.copy()
    out[:, 1:] |= bitmap[:, :-1]
    out[1:, :] |= bitmap[:-1, :]
    return out
