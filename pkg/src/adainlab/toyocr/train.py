"""Training loop: AdaDelta with gradient clipping, seeded end to end.

Given one seed the whole run is deterministic: data synthesis, weight init,
the per-layer swap draws, and therefore the metrics log, bit for bit.
Checkpoints are directories of FT4 tensor files plus a flat-text manifest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import gradcheck as gc
from .. import tensor as ft
from ..tensor import Rng
from ..textadain import TextAdaINConfig
from . import data as data_mod
from . import model as model_mod

__all__ = [
    "TrainConfig",
    "TrainResult",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "word_accuracy",
]


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    iters: int = 2000
    batch_size: int = 16
    decay: float = 0.95  # AdaDelta accumulator decay
    ada_eps: float = 1e-6
    clip: float = 5.0  # global gradient-norm ceiling
    eval_every: int = 100
    val_size: int = 200
    height: int = 32
    width: int = 96
    min_len: int = 3
    max_len: int = 5
    resize_augment: bool = False  # optional 40% random-resize augmentation
    textadain: TextAdaINConfig = field(default_factory=TextAdaINConfig)

    def validate(self):
        if self.iters <= 0:
            raise ValueError("iteration count must be positive")
        if self.clip <= 0:
            raise ValueError("gradient clip must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        self.textadain.validate()


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    metrics: list[tuple[int, float, float]]  # (iteration, loss, val_word_acc)
    final_val_acc: float


def _batch_images(samples) -> np.ndarray:
    imgs = np.stack([s.image for s in samples])
    return imgs[:, None, :, :].astype(np.float32)


def word_accuracy(predictions: list[str], labels: list[str]) -> float:
    """Case-insensitive exact-match word accuracy."""
    if not labels:
        return 0.0
    hits = sum(1 for p, t in zip(predictions, labels) if p.lower() == t.lower())
    return hits / len(labels)


def _resize_width(img: np.ndarray, factor: float) -> np.ndarray:
    h, w = img.shape
    new_w = max(8, int(round(w * factor)))
    cols = np.clip((np.arange(w) * new_w / w).astype(int), 0, new_w - 1)
    stretched_cols = np.clip((np.arange(new_w) * w / new_w).astype(int), 0, w - 1)
    stretched = img[:, stretched_cols]
    if new_w >= w:
        return stretched[:, :w]
    out = np.ones_like(img)
    out[:, :new_w] = stretched
    return out


def _clip_global_norm(grads: dict[str, np.ndarray], clip: float):
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g, dtype=np.float64)))
    norm = np.sqrt(total)
    if norm > clip:
        factor = clip / norm
        for k in grads:
            grads[k] = grads[k] * np.float32(factor)
    return grads


class AdaDelta:
    """Standard AdaDelta update: decayed second moments of grads and steps."""

    def __init__(self, params: dict[str, np.ndarray], decay: float, eps: float):
        self.decay = decay
        self.eps = eps
        self.eg2 = {k: np.zeros_like(v) for k, v in params.items()}
        self.edx2 = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        rho, eps = self.decay, self.eps
        for k, g in grads.items():
            self.eg2[k] = rho * self.eg2[k] + (1 - rho) * g * g
            dx = -np.sqrt(self.edx2[k] + eps) / np.sqrt(self.eg2[k] + eps) * g
            self.edx2[k] = rho * self.edx2[k] + (1 - rho) * dx * dx
            params[k] = params[k] + dx


def train(cfg: TrainConfig, out_dir=None) -> TrainResult:
    """Run the configured training; optionally write checkpoint + metrics."""
    cfg.validate()
    root = Rng(cfg.seed)
    data_rng = root.derive(1)
    init_rng = root.derive(2)
    val_rng = root.derive(3)
    aug_rng = root.derive(4)

    n_classes = len(data_mod.ALPHABET) + 1
    params = model_mod.init_params(init_rng, n_classes)
    opt = AdaDelta(params, cfg.decay, cfg.ada_eps)

    val_set = data_mod.make_samples(
        cfg.val_size, val_rng, cfg.height, cfg.width, cfg.min_len, cfg.max_len
    )
    val_images = _batch_images(val_set)
    val_labels = [s.label for s in val_set]

    metrics: list[tuple[int, float, float]] = []
    interval_losses: list[float] = []

    for it in range(1, cfg.iters + 1):
        batch = data_mod.make_samples(
            cfg.batch_size, data_rng, cfg.height, cfg.width, cfg.min_len, cfg.max_len
        )
        images = _batch_images(batch)
        if cfg.resize_augment:
            for i in range(images.shape[0]):
                if aug_rng.next_float() < 0.4:
                    factor = aug_rng.uniform(0.75, 1.25)
                    images[i, 0] = _resize_width(images[i, 0], factor)
        labels = [data_mod.encode_label(s.label) for s in batch]

        nodes = model_mod.as_nodes(params)
        img_node = gc.leaf(images, requires_grad=False)
        step_rng = root.derive(5, it)
        logp = model_mod.forward_logprobs(
            nodes, img_node, cfg.textadain, step_rng, training=True
        )
        loss = gc.ctc_op(logp, labels, blank=data_mod.BLANK)
        loss_val = float(loss.value)
        if not np.isfinite(loss_val):
            raise RuntimeError(
                f"training diverged at iteration {it}: loss={loss_val}"
            )
        gc.backward(loss)
        grads = {k: n.grad.astype(np.float32) for k, n in nodes.items()}
        _clip_global_norm(grads, cfg.clip)
        opt.step(params, grads)
        interval_losses.append(loss_val)

        if it % cfg.eval_every == 0 or it == cfg.iters:
            preds = model_mod.predict(params, val_images)
            acc = word_accuracy(preds, val_labels)
            mean_loss = float(np.mean(interval_losses))
            metrics.append((it, mean_loss, acc))
            interval_losses = []

    result = TrainResult(
        params=params, metrics=metrics, final_val_acc=metrics[-1][2]
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out, params, cfg)
        write_metrics(out / "metrics.csv", metrics)
    return result


def write_metrics(path, metrics):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "val_word_acc"])
        for it, loss, acc in metrics:
            writer.writerow([it, f"{loss:.6f}", f"{acc:.4f}"])


# Checkpoints store every parameter as a rank-4 FT4 tensor; the manifest
# records each parameter's logical shape plus the data geometry.


def _to_rank4(arr: np.ndarray) -> np.ndarray:
    shape = list(arr.shape) + [1] * (4 - arr.ndim)
    return arr.reshape(shape)


def save_checkpoint(ckpt_dir, params: dict[str, np.ndarray], cfg: TrainConfig):
    ckpt = Path(ckpt_dir)
    ckpt.mkdir(parents=True, exist_ok=True)
    lines = []
    for name in sorted(params):
        arr = params[name]
        fname = f"{name}.ft4"
        ft.save(ckpt / fname, _to_rank4(arr.astype(np.float32)))
        shape = "x".join(str(d) for d in arr.shape)
        lines.append(f"param.{name}.file={fname}")
        lines.append(f"param.{name}.shape={shape}")
    lines.append(f"alphabet={data_mod.ALPHABET}")
    lines.append(f"height={cfg.height}")
    lines.append(f"width={cfg.width}")
    lines.append(f"min_len={cfg.min_len}")
    lines.append(f"max_len={cfg.max_len}")
    (ckpt / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_checkpoint(ckpt_dir):
    """Returns (params, meta) from a checkpoint directory."""
    ckpt = Path(ckpt_dir)
    manifest = ckpt / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest in checkpoint {ckpt_dir}")
    meta: dict[str, str] = {}
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        meta[key] = value
    params: dict[str, np.ndarray] = {}
    names = {
        k.split(".")[1] for k in meta if k.startswith("param.") and k.endswith(".file")
    }
    for name in names:
        arr = ft.load(ckpt / meta[f"param.{name}.file"])
        shape = tuple(
            int(d) for d in meta[f"param.{name}.shape"].split("x") if d
        )
        params[name] = arr.reshape(shape)
    return params, meta
