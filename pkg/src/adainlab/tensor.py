"""Rank-4 feature tensors: axis sets, reductions, seeded RNG, binary i/o.

A feature tensor is a contiguous row-major ``numpy.ndarray`` of shape
``(B, C, H, W)`` and dtype float32 (float64 is accepted everywhere for
verification work).  Statistics are always indexed by the batch axis plus a
"kept" subset of {channel, height, width}; the reduction runs over the
complementary axes and never over the batch.
"""

from __future__ import annotations

import enum
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "Axis",
    "AxisSet",
    "Rng",
    "TensorIOError",
    "BadMagicError",
    "UnsupportedVersionError",
    "DimOverflowError",
    "TruncatedPayloadError",
    "KEPT_SET_NAMES",
    "as_feature_tensor",
    "parse_axis_set",
    "axis_set_name",
    "reduced_axes",
    "reduce_mean",
    "permutation",
    "save",
    "load",
]


class Axis(enum.IntEnum):
    """Non-batch axes of a (B, C, H, W) tensor; values are numpy axis ids."""

    CHANNEL = 1
    HEIGHT = 2
    WIDTH = 3


# An AxisSet names the KEPT (indexing) axes of a statistic; reduction happens
# over the complement.  Batch is implicitly always kept.
AxisSet = frozenset

_AXIS_TOKENS = {"c": Axis.CHANNEL, "h": Axis.HEIGHT, "w": Axis.WIDTH}

# The six kept-axis variants exercised by the sweep drivers.
KEPT_SET_NAMES = ("c", "w", "h", "hw", "cw", "ch")


def parse_axis_set(name: str) -> AxisSet:
    """Parse a kept-set token such as 'ch' or 'hw' into an AxisSet."""
    tokens = name.strip().lower()
    if not tokens:
        raise ValueError("kept-axis set must be non-empty")
    axes = set()
    for t in tokens:
        if t not in _AXIS_TOKENS:
            raise ValueError(f"unknown axis token {t!r} in {name!r}")
        axes.add(_AXIS_TOKENS[t])
    return frozenset(axes)


def axis_set_name(kept: AxisSet) -> str:
    """Canonical token for a kept-axis set ('c' before 'h' before 'w')."""
    order = {Axis.CHANNEL: "c", Axis.HEIGHT: "h", Axis.WIDTH: "w"}
    return "".join(order[a] for a in sorted(kept))


def as_feature_tensor(x, dtype=np.float32) -> np.ndarray:
    """Validate/coerce ``x`` into a contiguous rank-4 float array."""
    arr = np.ascontiguousarray(x, dtype=dtype)
    if arr.ndim != 4:
        raise ValueError(f"feature tensor must be rank 4, got shape {arr.shape}")
    return arr


def reduced_axes(kept: AxisSet) -> tuple[int, ...]:
    """Numpy axes reduced over for the given kept set (complement in C,H,W)."""
    if not kept:
        raise ValueError("kept-axis set must be non-empty")
    bad = [a for a in kept if not isinstance(a, Axis)]
    if bad:
        raise ValueError(f"kept set contains non-axis members: {bad}")
    return tuple(int(a) for a in Axis if a not in kept)


def reduce_mean(x: np.ndarray, kept: AxisSet) -> np.ndarray:
    """Mean over the axes complementary to ``kept``; batch is always retained.

    Output is indexed by (batch, *kept axes in B,C,H,W order).  Accumulation
    is float64 and the result is rounded back to the input dtype.
    """
    if x.ndim != 4:
        raise ValueError(f"expected rank-4 tensor, got shape {x.shape}")
    axes = reduced_axes(kept)
    if x.size == 0:
        raise ValueError("empty reduction domain")
    out = np.mean(x, axis=axes, dtype=np.float64)
    return out.astype(x.dtype)


class Rng:
    """Seedable deterministic generator (PCG64 stream, fixed draw algorithms).

    Identical seeds (and derivation keys) yield identical draw sequences on
    every platform.  A single instance is single-owner: do not share one
    stream across threads.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._key = _key
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_key))
        )

    def derive(self, *key: int) -> "Rng":
        """Child stream, independent of the parent and of siblings."""
        return Rng(self.seed, self._key + tuple(int(k) for k in key))

    def next_float(self) -> float:
        """One uniform draw in [0, 1)."""
        return float(self._gen.random())

    def uniform(self, lo: float, hi: float, size=None):
        return self._gen.uniform(lo, hi, size=size)

    def normal(self, size=None, dtype=np.float64):
        return self._gen.standard_normal(size=size, dtype=dtype)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self._gen.integers(0, n))

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self._key})"


def permutation(rng: Rng, n: int) -> np.ndarray:
    """Uniformly sampled permutation of [0, n) by Fisher-Yates.

    Fixed points (including the identity) are allowed.
    """
    if n < 1:
        raise ValueError("permutation requires n >= 1")
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = rng.randint(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


# ---------------------------------------------------------------------------
# Binary tensor files: magic "FT4\0", u32 version, 4 x u64 LE dims, f32 LE data.
# ---------------------------------------------------------------------------

MAGIC = b"FT4\0"
VERSION = 1
_MAX_ELEMENTS = 1 << 48  # sanity cap; dims beyond this are treated as corrupt


class TensorIOError(Exception):
    """Base class for tensor-file format errors."""


class BadMagicError(TensorIOError):
    pass


class UnsupportedVersionError(TensorIOError):
    pass


class DimOverflowError(TensorIOError):
    pass


class TruncatedPayloadError(TensorIOError):
    pass


def save(path, x: np.ndarray) -> None:
    """Write ``x`` (rank 4, float32) in the FT4 container format."""
    arr = as_feature_tensor(x, dtype=np.float32)
    header = MAGIC + struct.pack("<I", VERSION) + struct.pack("<4Q", *arr.shape)
    payload = arr.astype("<f4", copy=False).tobytes(order="C")
    Path(path).write_bytes(header + payload)


def load(path) -> np.ndarray:
    """Read an FT4 tensor file; bitwise inverse of :func:`save`."""
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic in {path}")
    if len(blob) < 8 + 32:
        raise TruncatedPayloadError(f"truncated header in {path}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version} in {path}")
    dims = struct.unpack_from("<4Q", blob, 8)
    count = 1
    for d in dims:
        count *= d
    if count > _MAX_ELEMENTS:
        raise DimOverflowError(f"dims {dims} overflow element cap")
    expected = 40 + 4 * count
    if len(blob) < expected:
        raise TruncatedPayloadError(
            f"payload truncated: expected {expected} bytes, got {len(blob)}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=40)
    return data.reshape(dims).astype(np.float32, copy=True)
