"""Corrupted-test-set evaluation for trained checkpoints."""

from __future__ import annotations

import numpy as np

from .. import corruptions as cor
from ..tensor import Rng
from . import data as data_mod
from . import model as model_mod
from . import train as train_mod

__all__ = ["make_test_set", "evaluate_params", "evaluate_checkpoint"]


def make_test_set(seed: int, n: int, height=32, width=96, min_len=3, max_len=5):
    rng = Rng(seed).derive(7)
    return data_mod.make_samples(n, rng, height, width, min_len, max_len)


def corrupt_samples(samples, spec: cor.CorruptionSpec, seed: int):
    """Apply one corruption to every sample, one derived RNG stream each."""
    base = Rng(seed).derive(8)
    out = []
    for i, s in enumerate(samples):
        img = cor.apply(s.image[:, :, None], spec, base.derive(i))[:, :, 0]
        out.append(data_mod.SyntheticSample(image=img.astype(np.float32), label=s.label))
    return out


def evaluate_params(
    params, samples, spec: cor.CorruptionSpec | None = None, seed: int = 0,
    batch_size: int = 32,
) -> float:
    """Word accuracy of a parameter set over (optionally corrupted) samples."""
    if spec is not None and spec.kind is not cor.Kind.NONE:
        samples = corrupt_samples(samples, spec, seed)
    preds: list[str] = []
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo : lo + batch_size]
        images = np.stack([s.image for s in chunk])[:, None, :, :].astype(np.float32)
        preds.extend(model_mod.predict(params, images))
    return train_mod.word_accuracy(preds, [s.label for s in samples])


def evaluate_checkpoint(
    ckpt_dir, spec: cor.CorruptionSpec | None = None, seed: int = 0, n: int = 200
) -> float:
    params, meta = train_mod.load_checkpoint(ckpt_dir)
    samples = make_test_set(
        seed,
        n,
        height=int(meta.get("height", 32)),
        width=int(meta.get("width", 96)),
        min_len=int(meta.get("min_len", 3)),
        max_len=int(meta.get("max_len", 5)),
    )
    return evaluate_params(params, samples, spec, seed)
