"""Four-layer convolutional encoder with optional statistics-swap layers.

Blocks are conv(3x3) -> [windowed swap] -> instance norm -> relu -> maxpool,
with channels 16/32/48/64 and pooling that collapses a height-32 input to a
single row.  The resulting frame sequence feeds a per-frame affine head and
a log-softmax over the alphabet plus blank.
"""

from __future__ import annotations

import numpy as np

from .. import gradcheck as gc
from ..tensor import Rng
from ..textadain import TextAdaINConfig
from . import ctc as ctc_mod
from . import data as data_mod

__all__ = [
    "CHANNELS",
    "POOLS",
    "init_params",
    "forward_logprobs",
    "frame_count",
    "predict",
]

CHANNELS = (16, 32, 48, 64)
POOLS = ((2, 2), (2, 2), (2, 1), (4, 1))  # collapses H=32 to 1; W shrinks 4x
IN_EPS = 1e-4


def frame_count(width: int) -> int:
    t = width
    for _, pw in POOLS:
        t //= pw
    return t


def init_params(rng: Rng, n_classes: int, in_channels: int = 1) -> dict[str, np.ndarray]:
    """He-normal conv stacks, unit instance-norm affines, zero-init head."""
    params: dict[str, np.ndarray] = {}
    c_in = in_channels
    for i, c_out in enumerate(CHANNELS):
        fan_in = c_in * 9
        params[f"conv{i}_w"] = (
            rng.normal(size=(c_out, c_in, 3, 3)) * np.sqrt(2.0 / fan_in)
        ).astype(np.float32)
        params[f"conv{i}_b"] = np.zeros(c_out, dtype=np.float32)
        params[f"in{i}_gamma"] = np.ones(c_out, dtype=np.float32)
        params[f"in{i}_beta"] = np.zeros(c_out, dtype=np.float32)
        c_in = c_out
    params["head_w"] = (
        rng.normal(size=(n_classes, CHANNELS[-1])) * np.sqrt(1.0 / CHANNELS[-1])
    ).astype(np.float32)
    params["head_b"] = np.zeros(n_classes, dtype=np.float32)
    return params


def forward_logprobs(
    param_nodes: dict[str, gc.Node],
    images: gc.Node,
    ta_cfg: TextAdaINConfig | None,
    rng: Rng | None,
    training: bool,
) -> gc.Node:
    """Graph from a (B, 1, H, W) image batch to (B, A+1, 1, T) log-probs.

    The swap layer sits right after each convolution (before normalization)
    and is skipped entirely when ``ta_cfg`` is absent or disabled; with it
    enabled, each layer redraws from its own derived RNG stream per call.
    """
    x = images
    for i in range(len(CHANNELS)):
        x = gc.conv2d(x, param_nodes[f"conv{i}_w"], param_nodes[f"conv{i}_b"], pad=1)
        if ta_cfg is not None and ta_cfg.enabled:
            if rng is None:
                raise ValueError("rng required when the swap layer is enabled")
            x = gc.textadain_op(x, ta_cfg, rng.derive(i), training)
        x = gc.instance_norm_op(
            x, param_nodes[f"in{i}_gamma"], param_nodes[f"in{i}_beta"], IN_EPS
        )
        x = gc.relu(x)
        x = gc.maxpool2d(x, *POOLS[i])
    logits = gc.channel_affine(x, param_nodes["head_w"], param_nodes["head_b"])
    return gc.log_softmax_c(logits)


def as_nodes(params: dict[str, np.ndarray], requires_grad: bool = True) -> dict[str, gc.Node]:
    return {k: gc.leaf(v, requires_grad=requires_grad) for k, v in params.items()}


def predict(params: dict[str, np.ndarray], images: np.ndarray) -> list[str]:
    """Greedy-decoded strings for a (B, 1, H, W) batch, inference mode."""
    nodes = as_nodes(params, requires_grad=False)
    img_node = gc.leaf(images, requires_grad=False)
    logp = forward_logprobs(nodes, img_node, None, None, training=False)
    out = []
    for b in range(images.shape[0]):
        seq = ctc_mod.greedy_decode(logp.value[b, :, 0, :].T, blank=data_mod.BLANK)
        out.append(data_mod.decode_label(seq))
    return out
