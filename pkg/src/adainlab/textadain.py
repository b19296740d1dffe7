"""Windowed batch-permuted statistics swapping (the TextAdaIN layer).

During training, with probability p per call, every feature map in the batch
is split into K width-windows, a single permutation over all B*K windows is
drawn, each window has its kept-{channel, height} statistics replaced by its
donor's, and the windows are merged back.  Width columns beyond K*floor(W/K)
are carried through untouched.  At inference the layer is the identity.

Randomness per fired call is consumed in a fixed order: one uniform for the
Bernoulli gate, then the Fisher-Yates permutation over B*K, then (for the
gaussian donor source) the donor noise.  Identical (input, config, seed)
triples therefore produce identical outputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import statswap
from .tensor import Axis, AxisSet, Rng, permutation

__all__ = [
    "DonorSource",
    "TextAdaINConfig",
    "WindowedBatch",
    "split",
    "merge",
    "forward",
    "forward_backward",
]

DEFAULT_KEPT: AxisSet = frozenset({Axis.CHANNEL, Axis.HEIGHT})


class DonorSource(enum.Enum):
    """Where donor windows come from: the permuted batch itself, synthetic
    i.i.d. standard-normal windows, or constant-zero windows."""

    BATCH = "batch"
    GAUSSIAN_NOISE = "gauss"
    BLANK_IMAGE = "blank"


@dataclass(frozen=True)
class TextAdaINConfig:
    p: float = 0.01
    k: int = 5
    eps: float = 1e-4
    kept: AxisSet = DEFAULT_KEPT
    donor_source: DonorSource = DonorSource.BATCH
    enabled: bool = True

    def validate(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if self.k < 1:
            raise ValueError(f"window count must be >= 1, got {self.k}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.kept:
            raise ValueError("kept-axis set must be non-empty")


@dataclass
class WindowedBatch:
    """B*K width-windows plus the untouched trailing remainder columns.

    ``elements[j*K + k]`` holds columns [k*w0, (k+1)*w0) of batch item j,
    where w0 = floor(W/K).  ``merge(split(x))`` is bitwise identity.
    """

    elements: np.ndarray  # (B*K, C, H, w0)
    remainder: np.ndarray  # (B, C, H, W - K*w0)
    source_dims: tuple[int, int, int, int]
    k: int

    @property
    def window_width(self) -> int:
        return self.elements.shape[3]

    @property
    def degenerate(self) -> bool:
        """True when floor(W/K) == 0 and the layer must act as identity."""
        return self.window_width == 0


def split(x: np.ndarray, k: int) -> WindowedBatch:
    """Split each batch item into k width-windows of floor(W/k) columns."""
    if x.ndim != 4:
        raise ValueError(f"expected rank-4 tensor, got shape {x.shape}")
    if k < 1:
        raise ValueError(f"window count must be >= 1, got {k}")
    b, c, h, w = x.shape
    w0 = w // k
    body = x[:, :, :, : k * w0]
    elements = (
        body.reshape(b, c, h, k, w0)
        .transpose(0, 3, 1, 2, 4)
        .reshape(b * k, c, h, w0)
        .copy()
    )
    remainder = x[:, :, :, k * w0 :].copy()
    return WindowedBatch(
        elements=elements, remainder=remainder, source_dims=(b, c, h, w), k=k
    )


def merge(wb: WindowedBatch) -> np.ndarray:
    """Exact inverse of :func:`split`, remainder columns reinserted."""
    b, c, h, w = wb.source_dims
    k = wb.k
    w0 = wb.window_width
    if wb.elements.shape != (b * k, c, h, w0):
        raise ValueError(
            f"windowed elements shape {wb.elements.shape} inconsistent with "
            f"source dims {(b, c, h, w)} and k={k}"
        )
    if wb.remainder.shape != (b, c, h, w - k * w0):
        raise ValueError(
            f"remainder shape {wb.remainder.shape} inconsistent with source "
            f"dims {(b, c, h, w)} and k={k}"
        )
    body = (
        wb.elements.reshape(b, k, c, h, w0)
        .transpose(0, 2, 3, 1, 4)
        .reshape(b, c, h, k * w0)
    )
    return np.concatenate([body, wb.remainder], axis=3)


def _make_donor(
    elements: np.ndarray, perm: np.ndarray, source: DonorSource, rng: Rng
) -> np.ndarray:
    if source is DonorSource.BATCH:
        return elements[perm]
    if source is DonorSource.GAUSSIAN_NOISE:
        noise = rng.normal(size=elements.shape)
        return noise.astype(elements.dtype)
    if source is DonorSource.BLANK_IMAGE:
        return np.zeros_like(elements)
    raise ValueError(f"unknown donor source {source!r}")


def forward(
    x: np.ndarray, cfg: TextAdaINConfig, rng: Rng, training: bool
) -> np.ndarray:
    """Apply the windowed swap with probability p; identity otherwise.

    Returns the input object unchanged on every no-op path (inference, the
    Bernoulli gate not firing, or windows of zero width).
    """
    out, _ = _run(x, cfg, rng, training, want_vjp=False)
    return out


def forward_backward(
    x: np.ndarray, cfg: TextAdaINConfig, rng: Rng, training: bool
) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Forward pass plus a closure mapping upstream to input gradients.

    Each window's gradient is the recipient-path vector-Jacobian product
    only; donated statistics contribute exactly zero, and remainder columns
    pass gradients through unchanged.
    """
    out, vjp = _run(x, cfg, rng, training, want_vjp=True)
    return out, vjp


def _identity_vjp(upstream: np.ndarray) -> np.ndarray:
    return upstream


def _run(x, cfg, rng, training, want_vjp):
    cfg.validate()
    if x.ndim != 4:
        raise ValueError(f"expected rank-4 tensor, got shape {x.shape}")
    if not training:
        return x, _identity_vjp
    if rng.next_float() >= cfg.p:
        return x, _identity_vjp
    wb = split(x, cfg.k)
    if wb.degenerate:
        return x, _identity_vjp

    n_elems = wb.elements.shape[0]
    perm = permutation(rng, n_elems)
    donor = _make_donor(wb.elements, perm, cfg.donor_source, rng)

    pair = statswap.SwapPair(recipient=wb.elements, donor=donor)
    swapped = statswap.adain(pair, cfg.kept, cfg.eps)
    out = merge(
        WindowedBatch(
            elements=swapped,
            remainder=wb.remainder,
            source_dims=wb.source_dims,
            k=cfg.k,
        )
    )

    if not want_vjp:
        return out, None

    kept, eps, k = cfg.kept, cfg.eps, cfg.k

    def vjp(upstream: np.ndarray) -> np.ndarray:
        if upstream.shape != x.shape:
            raise ValueError(
                f"upstream shape {upstream.shape} != input shape {x.shape}"
            )
        gw = split(upstream, k)
        grad = statswap.adain_backward(pair, kept, eps, gw.elements)
        return merge(
            WindowedBatch(
                elements=grad.d_recipient,
                remainder=gw.remainder,
                source_dims=gw.source_dims,
                k=k,
            )
        )

    return out, vjp
