"""Seeded synthetic word images: dark bitmap glyphs on a light background.

Each sample is a fixed-size float32 image in [0, 1] with per-glyph jitter
(horizontal/vertical shift, stroke thickness) and background speckle, all
drawn from an explicit RNG stream so datasets are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import Rng
from . import glyphs

__all__ = [
    "ALPHABET",
    "BLANK",
    "SyntheticSample",
    "encode_label",
    "decode_label",
    "render_word",
    "random_word",
    "make_samples",
]

ALPHABET = glyphs.ALPHABET
BLANK = 0  # symbol index 0 is the CTC blank; characters map to 1..len(ALPHABET)

_CHAR_TO_INDEX = {ch: i + 1 for i, ch in enumerate(ALPHABET)}


@dataclass(frozen=True)
class SyntheticSample:
    image: np.ndarray  # (H, W) float32 in [0, 1]
    label: str


def encode_label(label: str) -> list[int]:
    return [_CHAR_TO_INDEX[ch.upper()] for ch in label]


def decode_label(indices) -> str:
    return "".join(ALPHABET[i - 1] for i in indices)


def render_word(
    word: str,
    rng: Rng,
    height: int = 32,
    width: int = 96,
    scale: int = 3,
):
    """Render ``word``; returns (image, glyph boxes).

    Boxes are (y0, x0, y1, x1) per rendered glyph, one per label character.
    """
    img = np.full((height, width), 1.0, dtype=np.float32)
    glyph_h = glyphs.GLYPH_H * scale
    glyph_w = glyphs.GLYPH_W * scale
    x = 2 + rng.randint(4)
    y_base = (height - glyph_h) // 2
    boxes = []
    for ch in word:
        bitmap = glyphs.glyph_bitmap(ch)
        if rng.next_float() < 0.3:
            bitmap = glyphs.thicken(bitmap)
        y0 = max(0, y_base + rng.randint(7) - 3)
        ink = 0.45 * rng.next_float()  # dark strokes, varying contrast
        block = np.repeat(np.repeat(bitmap, scale, axis=0), scale, axis=1)
        y1 = min(y0 + glyph_h, height)
        x1 = min(x + glyph_w, width)
        patch = img[y0:y1, x:x1]
        patch[block[: y1 - y0, : x1 - x]] = ink
        boxes.append((y0, x, y1, x1))
        x += glyph_w + 1 + rng.randint(3)
    speckle = rng.uniform(0.0, 1.0, size=img.shape) < 0.04
    depth = rng.uniform(0.0, 0.7, size=img.shape).astype(np.float32)
    img = np.where(speckle, np.clip(img - depth, 0.0, 1.0), img)
    return img.astype(np.float32), boxes


def random_word(rng: Rng, min_len: int = 3, max_len: int = 5) -> str:
    n = min_len + rng.randint(max_len - min_len + 1)
    return "".join(ALPHABET[rng.randint(len(ALPHABET))] for _ in range(n))


def make_samples(
    n: int,
    rng: Rng,
    height: int = 32,
    width: int = 96,
    min_len: int = 3,
    max_len: int = 5,
) -> list[SyntheticSample]:
    samples = []
    for _ in range(n):
        word = random_word(rng, min_len, max_len)
        img, _ = render_word(word, rng, height=height, width=width)
        samples.append(SyntheticSample(image=img, label=word))
    return samples
