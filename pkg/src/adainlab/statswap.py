"""Statistics transfer between tensors over any kept-axis set.

``adain`` renormalizes a recipient so each of its reduction groups takes on
the donor's mean and (eps-inflated) standard deviation:

    out = std_D(donor) * (recipient - mean_D(recipient)) / std_D(recipient)
          + mean_D(donor)

The backward pass is a hand-derived closed form that treats the donor
statistics as constants, so the donor receives exactly zero gradient by
construction rather than by a runtime flag.  One generic kernel serves all
six kept-axis variants; kept {channel, height} is the hot path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .statmoments import _moments_keepdims
from .tensor import AxisSet, reduced_axes

__all__ = ["SwapPair", "SwapGrad", "adain", "adain_backward"]


@dataclass(frozen=True)
class SwapPair:
    """Recipient/donor tensors of identical shape."""

    recipient: np.ndarray
    donor: np.ndarray

    def validate(self):
        if self.recipient.shape != self.donor.shape:
            raise ValueError(
                f"recipient shape {self.recipient.shape} != donor shape "
                f"{self.donor.shape}"
            )


@dataclass(frozen=True)
class SwapGrad:
    """Gradients of a swap; the donor slot is identically zero."""

    d_recipient: np.ndarray
    d_donor: np.ndarray


def _swap_stats(pair: SwapPair, kept: AxisSet, eps: float):
    pair.validate()
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    mean_a, std_a = _moments_keepdims(pair.recipient, kept, eps)
    mean_b, std_b = _moments_keepdims(pair.donor, kept, eps)
    if eps == 0.0 and np.any(std_a == 0.0):
        raise ValueError("zero variance without epsilon")
    return mean_a, std_a, mean_b, std_b


def adain(pair: SwapPair, kept: AxisSet, eps: float) -> np.ndarray:
    """Transfer donor moments onto the recipient over kept set ``kept``.

    eps == 0 is permitted for exactness checks and raises if any recipient
    reduction group has zero variance.
    """
    mean_a, std_a, mean_b, std_b = _swap_stats(pair, kept, eps)
    x = pair.recipient
    return (std_b * (x - mean_a) / std_a + mean_b).astype(x.dtype)


def adain_backward(
    pair: SwapPair, kept: AxisSet, eps: float, upstream: np.ndarray
) -> SwapGrad:
    """Vector-Jacobian product of :func:`adain` with donor stats detached.

    Per reduction group of size n, with z = (x - mean_a)/std_a and g the
    upstream gradient:

        d_recipient = (std_b/std_a) * (g - mean(g) - z * mean(g*z))
        d_donor     = 0

    The donor enters the forward only through its (detached) statistics, so
    its gradient is exactly zero.
    """
    if upstream.shape != pair.recipient.shape:
        raise ValueError(
            f"upstream shape {upstream.shape} != pair shape {pair.recipient.shape}"
        )
    mean_a, std_a, _, std_b = _swap_stats(pair, kept, eps)
    axes = reduced_axes(kept)
    x = pair.recipient
    z = (x - mean_a) / std_a
    g = upstream
    g_mean = np.mean(g, axis=axes, keepdims=True, dtype=np.float64)
    gz_mean = np.mean(g * z, axis=axes, keepdims=True, dtype=np.float64)
    d = (std_b / std_a) * (g - g_mean - z * gz_mean)
    return SwapGrad(
        d_recipient=d.astype(x.dtype),
        d_donor=np.zeros_like(pair.donor),
    )
