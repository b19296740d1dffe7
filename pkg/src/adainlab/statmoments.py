"""Kept-axis feature moments and affine instance normalization.

The moment of a (B, C, H, W) tensor for a kept set D is indexed by
(batch, *D) and averages over the complementary axes.  Variance is the
population variance (divide by the reduction count), and epsilon sits
inside the square root: ``std = sqrt(var + eps)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Axis, AxisSet, reduced_axes

__all__ = ["StatPair", "AffineParams", "moments", "instance_norm", "expand_stat"]


@dataclass(frozen=True)
class StatPair:
    """Per-kept-index mean and eps-inflated standard deviation."""

    mean: np.ndarray
    std: np.ndarray
    eps: float


@dataclass(frozen=True)
class AffineParams:
    """Learned per-channel scale and shift of instance normalization."""

    gamma: np.ndarray
    beta: np.ndarray


def _moments_keepdims(x: np.ndarray, kept: AxisSet, eps: float):
    """Mean and eps-inflated std with singleton reduced axes (broadcastable).

    Shared kernel for the swap operations, which allow eps == 0; the public
    :func:`moments` enforces eps > 0.  Accumulates in float64, rounds to the
    input dtype.
    """
    axes = reduced_axes(kept)
    if x.ndim != 4:
        raise ValueError(f"expected rank-4 tensor, got shape {x.shape}")
    if x.size == 0:
        raise ValueError("empty reduction domain")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    mean64 = np.mean(x, axis=axes, keepdims=True, dtype=np.float64)
    centered = x - mean64.astype(x.dtype)
    var64 = np.mean(np.square(centered), axis=axes, keepdims=True, dtype=np.float64)
    std64 = np.sqrt(var64 + eps)
    return mean64.astype(x.dtype), std64.astype(x.dtype)


def moments(x: np.ndarray, kept: AxisSet, eps: float) -> StatPair:
    """Per-kept-index mean and ``sqrt(population variance + eps)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    mean, std = _moments_keepdims(x, kept, eps)
    axes = reduced_axes(kept)
    return StatPair(
        mean=np.squeeze(mean, axis=axes), std=np.squeeze(std, axis=axes), eps=eps
    )


def expand_stat(stat: np.ndarray, kept: AxisSet) -> np.ndarray:
    """Reinsert singleton reduced axes so a stat broadcasts over (B,C,H,W)."""
    return np.expand_dims(stat, axis=reduced_axes(kept))


def instance_norm(x: np.ndarray, params: AffineParams, eps: float) -> np.ndarray:
    """Per-(batch, channel) standardization over H,W with learned scale/shift."""
    if x.ndim != 4:
        raise ValueError(f"expected rank-4 tensor, got shape {x.shape}")
    gamma = np.asarray(params.gamma, dtype=x.dtype)
    beta = np.asarray(params.beta, dtype=x.dtype)
    if gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ValueError(
            f"affine params must have length C={x.shape[1]}, "
            f"got gamma {gamma.shape}, beta {beta.shape}"
        )
    mean, std = _moments_keepdims(x, frozenset({Axis.CHANNEL}), eps)
    g = gamma.reshape(1, -1, 1, 1)
    b = beta.reshape(1, -1, 1, 1)
    return (g * (x - mean) / std + b).astype(x.dtype)
