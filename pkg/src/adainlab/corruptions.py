"""Seeded image corruptions for robustness evaluation.

Images are float32 arrays shaped (H, W, C) with C in {1, 3} and values in
[0, 1]; every corruption preserves shape, clamps back into [0, 1], and is a
pure function of (image, spec, rng).  Parameters are *ranges*; each
application samples uniformly within them.  The corruptions fall into three
impact categories (local masking, pixel-wise, geometric) carried as metadata
so reports can group accuracy gaps.

The geometry (displacement fields, line kernels, homographies) is specified
here directly; scipy.ndimage supplies Gaussian smoothing, convolution, and
bilinear resampling.  Matching any external augmentation library bit for bit
is a non-goal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .tensor import Rng

__all__ = [
    "Kind",
    "Category",
    "CorruptionSpec",
    "default_spec",
    "apply",
    "read_image",
    "write_image",
    "CATEGORY",
]


class Kind(enum.Enum):
    NONE = "none"
    COARSE_DROPOUT = "coarse_dropout"
    CUTOUT = "cutout"
    GAUSS_NOISE = "gauss_noise"
    ELASTIC = "elastic"
    MOTION_BLUR = "motion_blur"
    SHEAR_ROTATE = "shear_rotate"
    PERSPECTIVE = "perspective"


class Category(enum.Enum):
    CLEAN = "clean"
    LOCAL_MASKING = "local_masking"
    PIXEL_WISE = "pixel_wise"
    GEOMETRIC = "geometric"


CATEGORY = {
    Kind.NONE: Category.CLEAN,
    Kind.COARSE_DROPOUT: Category.LOCAL_MASKING,
    Kind.CUTOUT: Category.LOCAL_MASKING,
    Kind.GAUSS_NOISE: Category.PIXEL_WISE,
    Kind.ELASTIC: Category.PIXEL_WISE,
    Kind.MOTION_BLUR: Category.PIXEL_WISE,
    Kind.SHEAR_ROTATE: Category.GEOMETRIC,
    Kind.PERSPECTIVE: Category.GEOMETRIC,
}

_DEFAULT_PARAMS = {
    Kind.NONE: {},
    Kind.COARSE_DROPOUT: {
        "drop_fraction": (0.0, 0.05),
        "size_percent": (0.02, 0.25),
    },
    Kind.CUTOUT: {"iterations": 4, "size": 0.2, "fill": 0.5},
    # noise std in [0,1] pixel units; 0.2 corresponds to 0.2*255 on 8-bit data
    Kind.GAUSS_NOISE: {"scale": (0.0, 0.2)},
    Kind.ELASTIC: {"alpha": (0.0, 5.0), "sigma": 0.5},
    Kind.MOTION_BLUR: {"k": 15, "angle": (-45.0, 45.0)},
    Kind.SHEAR_ROTATE: {"shear": (-10.0, 10.0), "rotate": (-10.0, 10.0)},
    Kind.PERSPECTIVE: {"scale": (0.05, 0.2)},
}


@dataclass(frozen=True)
class CorruptionSpec:
    kind: Kind
    params: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def category(self) -> Category:
        return CATEGORY[self.kind]

    def param(self, name):
        if name in self.params:
            return self.params[name]
        return _DEFAULT_PARAMS[self.kind][name]


def default_spec(kind: Kind, seed: int = 0, **overrides) -> CorruptionSpec:
    params = dict(_DEFAULT_PARAMS[kind])
    for key, value in overrides.items():
        if key not in params:
            raise ValueError(f"{kind.value} has no parameter {key!r}")
        params[key] = value
    return CorruptionSpec(kind=kind, params=params, seed=seed)


def _check_image(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(
            f"image must be (H, W, C) with C in {{1,3}}, got shape {arr.shape}"
        )
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("image must be non-empty")
    return arr


def _sample(rng: Rng, rng_or_const) -> float:
    if isinstance(rng_or_const, (tuple, list)):
        lo, hi = rng_or_const
        if hi < lo:
            raise ValueError(f"invalid range {rng_or_const}")
        if hi == lo:
            return float(lo)
        return float(rng.uniform(lo, hi))
    return float(rng_or_const)


def apply(img: np.ndarray, spec: CorruptionSpec, rng: Rng) -> np.ndarray:
    """Apply one corruption; deterministic given (img, spec, rng seed)."""
    arr = _check_image(img)
    fn = _APPLIERS[spec.kind]
    out = fn(arr, spec, rng)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _apply_none(arr, spec, rng):
    return arr.copy()


def _apply_coarse_dropout(arr, spec, rng):
    h, w, _ = arr.shape
    p = _sample(rng, spec.param("drop_fraction"))
    sp = _sample(rng, spec.param("size_percent"))
    gh = max(1, int(round(h * sp)))
    gw = max(1, int(round(w * sp)))
    small = rng.uniform(0.0, 1.0, size=(gh, gw)) < p
    ys = np.minimum((np.arange(h) * gh) // h, gh - 1)
    xs = np.minimum((np.arange(w) * gw) // w, gw - 1)
    mask = small[np.ix_(ys, xs)]
    out = arr.copy()
    out[mask, :] = 0.0
    return out


def _apply_cutout(arr, spec, rng):
    h, w, _ = arr.shape
    iters = int(spec.param("iterations"))
    size = float(spec.param("size"))
    fill = float(spec.param("fill"))
    side = max(1, int(round(size * min(h, w))))
    out = arr.copy()
    for _ in range(iters):
        cy = rng.randint(h)
        cx = rng.randint(w)
        y0 = max(0, cy - side // 2)
        x0 = max(0, cx - side // 2)
        out[y0 : min(h, y0 + side), x0 : min(w, x0 + side), :] = fill
    return out


def _apply_gauss_noise(arr, spec, rng):
    scale = _sample(rng, spec.param("scale"))
    noise = rng.normal(size=arr.shape).astype(np.float32)
    return arr + np.float32(scale) * noise


def _apply_elastic(arr, spec, rng):
    h, w, c = arr.shape
    alpha = _sample(rng, spec.param("alpha"))
    sigma = float(spec.param("sigma"))
    dx = ndimage.gaussian_filter(
        rng.uniform(-1.0, 1.0, size=(h, w)), sigma, mode="reflect"
    ) * alpha
    dy = ndimage.gaussian_filter(
        rng.uniform(-1.0, 1.0, size=(h, w)), sigma, mode="reflect"
    ) * alpha
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    coords = [yy + dy, xx + dx]
    out = np.empty_like(arr)
    for ch in range(c):
        out[:, :, ch] = ndimage.map_coordinates(
            arr[:, :, ch].astype(np.float64), coords, order=1, mode="reflect"
        )
    return out


def _motion_kernel(k: int, angle_deg: float) -> np.ndarray:
    kernel = np.zeros((k, k), dtype=np.float64)
    kernel[k // 2, :] = 1.0
    rotated = ndimage.rotate(kernel, angle_deg, reshape=False, order=1)
    rotated = np.clip(rotated, 0.0, None)
    total = rotated.sum()
    if total <= 0:
        raise ValueError("degenerate motion-blur kernel")
    return rotated / total


def _apply_motion_blur(arr, spec, rng):
    h, w, c = arr.shape
    k = int(spec.param("k"))
    if k > h or k > w:
        raise ValueError(f"kernel exceeds image: k={k}, image {h}x{w}")
    angle = _sample(rng, spec.param("angle"))
    kernel = _motion_kernel(k, angle)
    out = np.empty_like(arr)
    for ch in range(c):
        out[:, :, ch] = ndimage.convolve(
            arr[:, :, ch].astype(np.float64), kernel, mode="reflect"
        )
    return out


def _resample_affine(arr, matrix, offset):
    """Inverse-map with bilinear interpolation and reflected edges."""
    h, w, c = arr.shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    src_y = matrix[0, 0] * yy + matrix[0, 1] * xx + offset[0]
    src_x = matrix[1, 0] * yy + matrix[1, 1] * xx + offset[1]
    out = np.empty_like(arr)
    for ch in range(c):
        out[:, :, ch] = ndimage.map_coordinates(
            arr[:, :, ch].astype(np.float64), [src_y, src_x], order=1, mode="reflect"
        )
    return out


def _apply_shear_rotate(arr, spec, rng):
    h, w, _ = arr.shape
    shear = np.deg2rad(_sample(rng, spec.param("shear")))
    rot = np.deg2rad(_sample(rng, spec.param("rotate")))
    # forward map: shear along x, then rotate, both about the image center
    shear_m = np.array([[1.0, 0.0], [np.tan(shear), 1.0]])  # (y, x) coords
    rot_m = np.array([[np.cos(rot), -np.sin(rot)], [np.sin(rot), np.cos(rot)]])
    fwd = rot_m @ shear_m
    inv = np.linalg.inv(fwd)
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = center - inv @ center
    return _resample_affine(arr, inv, offset)


def _apply_perspective(arr, spec, rng):
    h, w, c = arr.shape
    scale = _sample(rng, spec.param("scale"))
    corners_dst = np.array(
        [[0.0, 0.0], [0.0, w - 1.0], [h - 1.0, 0.0], [h - 1.0, w - 1.0]]
    )
    jitter = rng.normal(size=(4, 2))
    jitter[:, 0] = np.clip(jitter[:, 0] * scale * h, -0.3 * h, 0.3 * h)
    jitter[:, 1] = np.clip(jitter[:, 1] * scale * w, -0.3 * w, 0.3 * w)
    corners_src = corners_dst + jitter
    hom = _homography(corners_dst, corners_src)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    denom = hom[2, 0] * yy + hom[2, 1] * xx + hom[2, 2]
    src_y = (hom[0, 0] * yy + hom[0, 1] * xx + hom[0, 2]) / denom
    src_x = (hom[1, 0] * yy + hom[1, 1] * xx + hom[1, 2]) / denom
    out = np.empty_like(arr)
    for ch in range(c):
        out[:, :, ch] = ndimage.map_coordinates(
            arr[:, :, ch].astype(np.float64), [src_y, src_x], order=1, mode="reflect"
        )
    return out


def _homography(src_pts: np.ndarray, dst_pts: np.ndarray) -> np.ndarray:
    """3x3 map sending each src point (y, x) to its dst point."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((sy, sx), (dy, dx)) in enumerate(zip(src_pts, dst_pts)):
        a[2 * i] = [sy, sx, 1, 0, 0, 0, -sy * dy, -sx * dy]
        b[2 * i] = dy
        a[2 * i + 1] = [0, 0, 0, sy, sx, 1, -sy * dx, -sx * dx]
        b[2 * i + 1] = dx
    sol = np.linalg.solve(a, b)
    return np.append(sol, 1.0).reshape(3, 3)


_APPLIERS = {
    Kind.NONE: _apply_none,
    Kind.COARSE_DROPOUT: _apply_coarse_dropout,
    Kind.CUTOUT: _apply_cutout,
    Kind.GAUSS_NOISE: _apply_gauss_noise,
    Kind.ELASTIC: _apply_elastic,
    Kind.MOTION_BLUR: _apply_motion_blur,
    Kind.SHEAR_ROTATE: _apply_shear_rotate,
    Kind.PERSPECTIVE: _apply_perspective,
}


# ---------------------------------------------------------------------------
# 8-bit PGM (P5) / PPM (P6) image files, converted to and from float [0, 1]
# ---------------------------------------------------------------------------


def read_image(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:2] not in (b"P5", b"P6"):
        raise ValueError(f"unsupported image format in {path} (want P5/P6)")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields[0], fields[1], fields[2]
    if maxval != 255:
        raise ValueError(f"only 8-bit images supported, maxval={maxval}")
    channels = 1 if blob[:2] == b"P5" else 3
    count = width * height * channels
    data = np.frombuffer(blob, dtype=np.uint8, count=count, offset=pos)
    arr = data.reshape(height, width, channels).astype(np.float32) / 255.0
    return arr


def write_image(path, img: np.ndarray) -> None:
    arr = _check_image(img)
    h, w, c = arr.shape
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    magic = b"P5" if c == 1 else b"P6"
    header = magic + f"\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + quantized.tobytes())
