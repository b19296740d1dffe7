"""Minimal reverse-mode differentiation and a central-difference verifier.

The engine covers exactly the operations the toy recognizer composes:
convolution, relu, max pooling, per-channel affine, instance normalization,
the windowed statistics swap, and CTC.  Values carry whatever float dtype the
leaves were given; verification runs feed float64 leaves, training feeds
float32.  Graphs are single-threaded; independent graphs may run
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import statswap
from . import textadain as ta
from .statmoments import _moments_keepdims
from .tensor import Axis, AxisSet, Rng

__all__ = [
    "Node",
    "leaf",
    "constant",
    "backward",
    "add",
    "sub",
    "mul",
    "scale",
    "sum_all",
    "relu",
    "conv2d",
    "maxpool2d",
    "channel_affine",
    "instance_norm_op",
    "adain_op",
    "textadain_op",
    "log_softmax_c",
    "ctc_op",
    "FiniteDiffReport",
    "finite_diff",
    "check_gradient",
    "frozen_swap_fn",
    "check_textadain_vjp",
]


class Node:
    """One value in the computation graph.

    ``vjp`` maps the gradient at this node to a tuple of gradients aligned
    with ``parents`` (``None`` entries mean "no gradient flows there").
    """

    __slots__ = ("value", "parents", "vjp", "grad", "requires_grad")

    def __init__(self, value, parents=(), vjp=None, requires_grad=True):
        self.value = np.asarray(value)
        self.parents: tuple[Node, ...] = tuple(parents)
        self.vjp = vjp
        self.grad = None
        self.requires_grad = requires_grad


def leaf(value, requires_grad: bool = True) -> Node:
    return Node(np.asarray(value), requires_grad=requires_grad)


def constant(value) -> Node:
    return Node(np.asarray(value), requires_grad=False)


def _toposort(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Node) -> None:
    """Populate ``grad`` on every reachable node; root must be scalar."""
    if root.value.size != 1:
        raise ValueError(f"backward requires a scalar root, got shape {root.value.shape}")
    order = _toposort(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.vjp is None or node.grad is None:
            continue
        grads = node.vjp(node.grad)
        for parent, g in zip(node.parents, grads):
            if g is None or not parent.requires_grad:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g


# ---------------------------------------------------------------------------
# Elementwise and reduction ops
# ---------------------------------------------------------------------------


def add(a: Node, b: Node) -> Node:
    return Node(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Node, b: Node) -> Node:
    return Node(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: Node, b: Node) -> Node:
    return Node(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def scale(a: Node, c: float) -> Node:
    return Node(a.value * c, (a,), lambda g: (g * c,))


def sum_all(a: Node) -> Node:
    def vjp(g):
        return (np.broadcast_to(g, a.value.shape).astype(a.value.dtype),)

    return Node(np.sum(a.value, keepdims=False), (a,), vjp)


def relu(a: Node) -> Node:
    mask = a.value > 0
    return Node(a.value * mask, (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# Convolution (stride 1, symmetric zero padding) via im2col
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray, kh: int, kw: int, pad: int):
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = h + 2 * pad - kh + 1
    wo = w + 2 * pad - kw + 1
    cols = np.empty((b, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + ho, j : j + wo]
    return cols.reshape(b, c * kh * kw, ho * wo), (ho, wo)


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, pad: int):
    b, c, h, w = x_shape
    ho = h + 2 * pad - kh + 1
    wo = w + 2 * pad - kw + 1
    cols6 = cols.reshape(b, c, kh, kw, ho, wo)
    xp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + ho, j : j + wo] += cols6[:, :, i, j]
    if pad == 0:
        return xp
    return xp[:, :, pad : pad + h, pad : pad + w]


def conv2d(x: Node, weight: Node, bias: Node, pad: int = 1) -> Node:
    """2-D convolution, stride 1; weight (Cout, Cin, kh, kw), bias (Cout,)."""
    co, ci, kh, kw = weight.value.shape
    if x.value.shape[1] != ci:
        raise ValueError(
            f"conv2d channel mismatch: input {x.value.shape[1]}, weight {ci}"
        )
    cols, (ho, wo) = _im2col(x.value, kh, kw, pad)
    wm = weight.value.reshape(co, ci * kh * kw)
    out = wm @ cols  # (co,k) @ (b,k,p) -> (b,co,p)
    out = out.reshape(x.value.shape[0], co, ho, wo) + bias.value.reshape(1, co, 1, 1)

    def vjp(g):
        gm = np.ascontiguousarray(g.reshape(g.shape[0], co, ho * wo))
        dw = (gm @ cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.value.shape)
        db = gm.sum(axis=(0, 2))
        dcols = wm.T @ gm
        dx = _col2im(dcols, x.value.shape, kh, kw, pad)
        return (dx, dw, db)

    return Node(out.astype(x.value.dtype), (x, weight, bias), vjp)


def maxpool2d(x: Node, ph: int, pw: int) -> Node:
    """Non-overlapping max pooling; pool extents must divide H and W.

    Backward routes each output's gradient to a single element per window
    (the first maximum in row-major window order, on ties).
    """
    b, c, h, w = x.value.shape
    if h % ph or w % pw:
        raise ValueError(f"pool {ph}x{pw} does not divide input {h}x{w}")
    offsets = [(i, j) for i in range(ph) for j in range(pw)]
    out = x.value[:, :, ::ph, ::pw].copy()
    idx = np.zeros(out.shape, dtype=np.uint8)
    for n, (i, j) in enumerate(offsets[1:], start=1):
        v = x.value[:, :, i::ph, j::pw]
        mask = v > out
        np.copyto(out, v, where=mask)
        idx[mask] = n

    def vjp(g):
        dx = np.zeros_like(x.value)
        for n, (i, j) in enumerate(offsets):
            np.copyto(dx[:, :, i::ph, j::pw], g, where=(idx == n))
        return (dx,)

    return Node(out, (x,), vjp)


def channel_affine(x: Node, weight: Node, bias: Node) -> Node:
    """Per-location linear map over the channel axis: (B,C,H,W) -> (B,M,H,W)."""
    wv = weight.value
    if x.value.shape[1] != wv.shape[1]:
        raise ValueError(
            f"affine channel mismatch: input {x.value.shape[1]}, weight {wv.shape}"
        )
    out = np.einsum("mc,bchw->bmhw", wv, x.value, optimize=True)
    out = out + bias.value.reshape(1, -1, 1, 1)

    def vjp(g):
        dw = np.einsum("bmhw,bchw->mc", g, x.value, optimize=True)
        db = g.sum(axis=(0, 2, 3))
        dx = np.einsum("mc,bmhw->bchw", wv, g, optimize=True)
        return (dx, dw, db)

    return Node(out, (x, weight, bias), vjp)


def instance_norm_op(x: Node, gamma: Node, beta: Node, eps: float) -> Node:
    """Instance normalization with learned per-channel scale and shift.

    Unlike the statistics swap, gradients flow through the normalizing
    moments themselves.
    """
    kept = frozenset({Axis.CHANNEL})
    mean, std = _moments_keepdims(x.value, kept, eps)
    xhat = (x.value - mean) / std
    g4 = gamma.value.reshape(1, -1, 1, 1)
    out = g4 * xhat + beta.value.reshape(1, -1, 1, 1)

    def vjp(g):
        dbeta = g.sum(axis=(0, 2, 3))
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dxhat = g * g4
        m1 = dxhat.mean(axis=(2, 3), keepdims=True)
        m2 = (dxhat * xhat).mean(axis=(2, 3), keepdims=True)
        dx = (dxhat - m1 - xhat * m2) / std
        return (dx.astype(x.value.dtype), dgamma, dbeta)

    return Node(out.astype(x.value.dtype), (x, gamma, beta), vjp)


def adain_op(x: Node, donor: Node, kept: AxisSet, eps: float) -> Node:
    """Statistics swap as a graph op; the donor leg gets exactly zero gradient."""
    pair = statswap.SwapPair(recipient=x.value, donor=donor.value)
    out = statswap.adain(pair, kept, eps)

    def vjp(g):
        grad = statswap.adain_backward(pair, kept, eps, g)
        return (grad.d_recipient, grad.d_donor)

    return Node(out, (x, donor), vjp)


def textadain_op(
    x: Node, cfg: ta.TextAdaINConfig, rng: Rng, training: bool
) -> Node:
    """Windowed swap layer as a graph op (identity when not training)."""
    out, layer_vjp = ta.forward_backward(x.value, cfg, rng, training)

    def vjp(g):
        return (layer_vjp(g),)

    return Node(out, (x,), vjp)


def log_softmax_c(x: Node) -> Node:
    """Log-softmax over the channel axis of a (B,C,H,W) tensor."""
    v = x.value
    m = v.max(axis=1, keepdims=True)
    shifted = v - m
    lse = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True)) + m
    out = v - lse
    sm = np.exp(out)

    def vjp(g):
        return (g - sm * g.sum(axis=1, keepdims=True),)

    return Node(out, (x,), vjp)


def ctc_op(logp: Node, labels: Sequence[Sequence[int]], blank: int = 0) -> Node:
    """Mean CTC loss over a batch of per-frame log-distributions.

    ``logp`` has shape (B, A+1, 1, T); ``labels[b]`` is the b-th symbol-index
    sequence.  Unreachable labels contribute +inf loss and zero gradient.
    """
    from .toyocr import ctc as ctc_mod

    b, a1, hh, t = logp.value.shape
    if hh != 1:
        raise ValueError(f"ctc expects height-1 features, got shape {logp.value.shape}")
    if len(labels) != b:
        raise ValueError(f"{len(labels)} labels for batch of {b}")
    losses = np.zeros(b, dtype=np.float64)
    grads = np.zeros((b, t, a1), dtype=np.float64)
    for i in range(b):
        frame_logp = logp.value[i, :, 0, :].T  # (T, A+1)
        loss_i, grad_i = ctc_mod.ctc_loss(frame_logp, labels[i], blank=blank)
        losses[i] = loss_i
        grads[i] = grad_i
    loss = np.asarray(losses.mean(), dtype=logp.value.dtype)

    def vjp(g):
        dlogp = np.transpose(grads, (0, 2, 1))[:, :, None, :] * (float(g) / b)
        return (dlogp.astype(logp.value.dtype),)

    return Node(loss, (logp,), vjp)


# ---------------------------------------------------------------------------
# Central finite differences
# ---------------------------------------------------------------------------


@dataclass
class FiniteDiffReport:
    """Central-difference gradient estimate and, optionally, a comparison.

    ``errors`` holds per-element deviations from an analytic gradient,
    relative to the gradient's overall magnitude:
    |fd - an| / max(inf-norm(fd), inf-norm(an)).  Near-zero elements are
    thereby judged on the scale the finite-difference estimate can actually
    resolve.
    """

    gradient: np.ndarray
    h: np.ndarray
    errors: np.ndarray | None = None
    max_rel_error: float | None = None


def _steps(x: np.ndarray, h) -> np.ndarray:
    if h is not None:
        return np.full(x.shape, float(h), dtype=np.float64)
    # default: 1e-4 relative to element magnitude, floored at 1e-6
    return np.maximum(1e-4 * np.abs(x), 1e-6)


def finite_diff(f: Callable[[np.ndarray], float], x: np.ndarray, h: float | None = None) -> FiniteDiffReport:
    """Central-difference gradient of scalar ``f`` at ``x`` in float64."""
    if h is not None and h <= 0:
        raise ValueError("step size h must be positive")
    x64 = np.ascontiguousarray(x, dtype=np.float64)
    steps = _steps(x64, h)
    grad = np.zeros_like(x64)
    flat_x = x64.reshape(-1)
    flat_h = steps.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + flat_h[i]
        fp = float(f(x64))
        flat_x[i] = orig - flat_h[i]
        fm = float(f(x64))
        flat_x[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite objective at element {i}")
        flat_g[i] = (fp - fm) / (2.0 * flat_h[i])
    return FiniteDiffReport(gradient=grad, h=steps)


def check_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    analytic: np.ndarray,
    h: float | None = None,
) -> FiniteDiffReport:
    """Compare an analytic gradient against central differences."""
    report = finite_diff(f, x, h)
    fd = report.gradient
    an = np.asarray(analytic, dtype=np.float64)
    if an.shape != fd.shape:
        raise ValueError(f"analytic shape {an.shape} != estimate shape {fd.shape}")
    scale = max(np.max(np.abs(fd), initial=0.0), np.max(np.abs(an), initial=0.0))
    errors = np.abs(fd - an) / (scale if scale > 0 else 1.0)
    report.errors = errors
    report.max_rel_error = float(errors.max()) if errors.size else 0.0
    return report


# ---------------------------------------------------------------------------
# Frozen-donor verification of the swap layer
# ---------------------------------------------------------------------------


def frozen_swap_fn(x0: np.ndarray, cfg: ta.TextAdaINConfig, seed: int):
    """Deterministic function equal to the fired swap layer with donor
    statistics frozen at ``x0`` -- the function the detached backward
    actually differentiates.  Draw order replicates
    :func:`adainlab.textadain.forward` for the same seed, so the frozen
    function agrees with the live layer at ``x0``.
    """
    from .tensor import permutation

    wb0 = ta.split(x0, cfg.k)
    rng = Rng(seed)
    rng.next_float()  # the Bernoulli gate draw
    perm = permutation(rng, wb0.elements.shape[0])
    if cfg.donor_source is ta.DonorSource.BATCH:
        donor0 = wb0.elements[perm]
    elif cfg.donor_source is ta.DonorSource.GAUSSIAN_NOISE:
        donor0 = rng.normal(size=wb0.elements.shape).astype(wb0.elements.dtype)
    else:
        donor0 = np.zeros_like(wb0.elements)
    mean_b, std_b = _moments_keepdims(donor0, cfg.kept, cfg.eps)

    def fn(x: np.ndarray) -> np.ndarray:
        wb = ta.split(x, cfg.k)
        mean_a, std_a = _moments_keepdims(wb.elements, cfg.kept, cfg.eps)
        out_elems = std_b * (wb.elements - mean_a) / std_a + mean_b
        return ta.merge(
            ta.WindowedBatch(
                elements=out_elems.astype(x.dtype),
                remainder=wb.remainder,
                source_dims=wb.source_dims,
                k=cfg.k,
            )
        )

    return fn


def check_textadain_vjp(
    x0: np.ndarray, cfg: ta.TextAdaINConfig, seed: int, h: float | None = 1e-5
) -> FiniteDiffReport:
    """Probe the layer's vector-Jacobian product with a fixed random
    upstream and compare against central differences of the frozen-donor
    function.

    The default step undercuts the default element-relative rule: small
    window groups can have tiny standard deviations, whose reciprocals give
    the swap large third derivatives, and a linear probe leaves h = 1e-5
    comfortably above the float64 rounding floor.
    """
    out0, vjp = ta.forward_backward(x0, cfg, Rng(seed), training=True)
    upstream = Rng(seed).derive(17).normal(size=out0.shape)
    analytic = vjp(upstream)
    frozen = frozen_swap_fn(x0, cfg, seed)

    def f(x):
        return float(np.sum(frozen(x) * upstream))

    return check_gradient(f, x0, analytic, h=h)
