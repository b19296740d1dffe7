"""Flat ``key=value`` text configuration shared by the CLI and sweeps.

Lines are UTF-8 ``key=value`` pairs; ``#`` starts a comment; blank lines are
ignored.  Command-line ``--set key=value`` flags override file values.
"""

from __future__ import annotations

from dataclasses import replace

from .tensor import parse_axis_set
from .textadain import DonorSource, TextAdaINConfig
from .toyocr.train import TrainConfig

__all__ = ["parse_config_text", "parse_assignment", "train_config_from_flat"]

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_assignment(line: str) -> tuple[str, str]:
    key, sep, value = line.partition("=")
    if not sep or not key.strip():
        raise ValueError(f"expected key=value, got {line!r}")
    return key.strip(), value.strip()


def parse_config_text(text: str) -> dict[str, str]:
    flat: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = parse_assignment(line)
        flat[key] = value
    return flat


def _to_bool(value: str) -> bool:
    v = value.strip().lower()
    if v not in _BOOL:
        raise ValueError(f"expected boolean, got {value!r}")
    return _BOOL[v]


_DONORS = {
    "batch": DonorSource.BATCH,
    "gauss": DonorSource.GAUSSIAN_NOISE,
    "blank": DonorSource.BLANK_IMAGE,
}

_INT_KEYS = {
    "seed", "iters", "batch", "eval_every", "val_size",
    "height", "width", "min_len", "max_len",
}


def train_config_from_flat(flat: dict[str, str]) -> TrainConfig:
    """Build a training config from flat keys, rejecting unknown ones."""
    cfg = TrainConfig()
    ta = cfg.textadain
    for key, value in flat.items():
        if key in _INT_KEYS:
            field = "batch_size" if key == "batch" else key
            cfg = replace(cfg, **{field: int(value)})
        elif key == "resize_augment":
            cfg = replace(cfg, resize_augment=_to_bool(value))
        elif key == "textadain.enabled":
            ta = replace(ta, enabled=_to_bool(value))
        elif key == "textadain.p":
            ta = replace(ta, p=float(value))
        elif key == "textadain.k":
            ta = replace(ta, k=int(value))
        elif key == "textadain.eps":
            ta = replace(ta, eps=float(value))
        elif key == "textadain.kept":
            ta = replace(ta, kept=parse_axis_set(value))
        elif key == "textadain.donor":
            if value not in _DONORS:
                raise ValueError(
                    f"unknown donor source {value!r} (want batch|gauss|blank)"
                )
            ta = replace(ta, donor_source=_DONORS[value])
        else:
            raise ValueError(f"unknown config key {key!r}")
    return replace(cfg, textadain=ta)
