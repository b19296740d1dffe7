"""Experiment driver: sweeps, corruption-gap reports, feature-intensity
maps, and kernel microbenchmarks.

Reports are plain CSV (plus PGM images for maps).  Given identical plans and
seeds the result files are byte-for-byte reproducible; wall-clock metadata
goes to a separate ``meta.txt``.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import corruptions as cor
from . import textadain as ta
from .config import parse_assignment, parse_config_text, train_config_from_flat
from .tensor import Rng
from .toyocr import evaluate as eval_mod
from .toyocr import train as train_mod

__all__ = [
    "RunSpec",
    "ExperimentPlan",
    "plan_from_text",
    "preset_plan",
    "run_sweep",
    "corruption_report",
    "intensity_map",
    "bench",
]

P_GRID = (0.001, 0.01, 0.05, 0.1, 0.25)  # probability sweep grid
K_GRID = (1, 2, 3, 5, 10)  # window-count sweep grid
AXIS_GRID = ("c", "w", "h", "hw", "cw", "ch")  # kept-axis variants
DONOR_GRID = ("batch", "gauss", "blank")


@dataclass(frozen=True)
class RunSpec:
    name: str
    overrides: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentPlan:
    runs: tuple[RunSpec, ...]
    seeds: tuple[int, ...]
    out_dir: Path
    base: dict[str, str] = field(default_factory=dict)
    eval_corruptions: bool = False  # also evaluate every corruption kind per run
    test_size: int = 200

    def validate(self):
        names = [r.name for r in self.runs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate run names in plan: {names}")


def plan_from_text(text: str, out_dir=None) -> ExperimentPlan:
    """Parse a plan file: base keys, ``seeds=...``, and ``run.<name>.<key>``."""
    base: dict[str, str] = {}
    runs: dict[str, dict[str, str]] = {}
    seeds: tuple[int, ...] = (0,)
    out = Path(out_dir) if out_dir else None
    test_size = 200
    eval_corr = False
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = parse_assignment(line)
        if key == "seeds":
            seeds = tuple(int(s) for s in value.split(",") if s.strip())
        elif key == "out":
            if out is None:
                out = Path(value)
        elif key == "test_size":
            test_size = int(value)
        elif key == "eval_corruptions":
            eval_corr = value.lower() in ("true", "1", "yes")
        elif key.startswith("run."):
            _, name, sub = key.split(".", 2)
            runs.setdefault(name, {})[sub] = value
        else:
            base[key] = value
    if out is None:
        raise ValueError("plan must set out= (or pass --out)")
    run_specs = tuple(RunSpec(name, ov) for name, ov in runs.items())
    return ExperimentPlan(
        runs=run_specs, seeds=seeds, out_dir=out, base=base,
        eval_corruptions=eval_corr, test_size=test_size,
    )


def preset_plan(preset: str, out_dir, seeds=(0, 1, 2), base=None) -> ExperimentPlan:
    """Built-in sweep grids: p, k, axis, donor, corruption."""
    base = dict(base or {})
    runs: list[RunSpec] = []
    eval_corr = False
    if preset == "p":
        runs.append(RunSpec("baseline", {"textadain.enabled": "false"}))
        for p in P_GRID:
            runs.append(RunSpec(f"p{p}", {"textadain.enabled": "true", "textadain.p": str(p)}))
    elif preset == "k":
        for k in K_GRID:
            runs.append(RunSpec(f"k{k}", {"textadain.enabled": "true", "textadain.k": str(k)}))
    elif preset == "axis":
        for kept in AXIS_GRID:
            runs.append(RunSpec(
                f"{kept}_k1",
                {"textadain.enabled": "true", "textadain.kept": kept, "textadain.k": "1"},
            ))
            runs.append(RunSpec(
                f"{kept}_k5",
                {"textadain.enabled": "true", "textadain.kept": kept, "textadain.k": "5"},
            ))
    elif preset == "donor":
        for donor in DONOR_GRID:
            runs.append(RunSpec(
                f"donor_{donor}", {"textadain.enabled": "true", "textadain.donor": donor}
            ))
    elif preset == "corruption":
        runs.append(RunSpec("baseline", {"textadain.enabled": "false"}))
        runs.append(RunSpec("textadain", {"textadain.enabled": "true"}))
        eval_corr = True
    else:
        raise ValueError(f"unknown preset {preset!r} (want p|k|axis|donor|corruption)")
    return ExperimentPlan(
        runs=tuple(runs), seeds=tuple(seeds), out_dir=Path(out_dir), base=base,
        eval_corruptions=eval_corr,
    )


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def run_sweep(plan: ExperimentPlan) -> Path:
    """Execute every (run, seed), write results/summary CSVs; aborted runs
    are recorded and the sweep continues."""
    plan.validate()
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()

    rows: list[dict] = []
    for run in plan.runs:
        flat = dict(plan.base)
        flat.update(run.overrides)
        for seed in plan.seeds:
            flat_seeded = dict(flat)
            flat_seeded["seed"] = str(seed)
            row = {"run": run.name, "seed": seed, "status": "ok",
                   "final_loss": "", "val_acc": ""}
            try:
                cfg = train_config_from_flat(flat_seeded)
                result = train_mod.train(cfg, out_dir=out / f"{run.name}_s{seed}")
                row["final_loss"] = f"{result.metrics[-1][1]:.6f}"
                row["val_acc"] = _fmt(result.final_val_acc)
                if plan.eval_corruptions:
                    test = eval_mod.make_test_set(
                        10_000 + seed, plan.test_size,
                        height=cfg.height, width=cfg.width,
                        min_len=cfg.min_len, max_len=cfg.max_len,
                    )
                    for kind in cor.Kind:
                        spec = cor.default_spec(kind)
                        acc = eval_mod.evaluate_params(
                            result.params, test, spec, seed=seed
                        )
                        row[f"acc_{kind.value}"] = _fmt(acc)
            except Exception as exc:  # run failure must not kill the sweep
                row["status"] = f"error: {exc}"
            rows.append(row)

    columns = ["run", "seed", "status", "final_loss", "val_acc"]
    if plan.eval_corruptions:
        columns += [f"acc_{kind.value}" for kind in cor.Kind]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(str(row.get(c, "")) for c in columns))
    (out / "results.csv").write_text("\n".join(lines) + "\n")

    _write_summary(out, plan, rows)
    if plan.eval_corruptions:
        _write_gap_table(out, plan, rows)
    (out / "meta.txt").write_text(
        f"started={started}\nfinished={datetime.now(timezone.utc).isoformat()}\n"
    )
    return out / "results.csv"


def _write_summary(out: Path, plan: ExperimentPlan, rows):
    lines = ["run,n,acc_mean,acc_std"]
    for run in plan.runs:
        accs = [
            float(r["val_acc"]) for r in rows
            if r["run"] == run.name and r["status"] == "ok" and r["val_acc"] != ""
        ]
        if accs:
            mean = statistics.fmean(accs)
            std = statistics.pstdev(accs)
            lines.append(f"{run.name},{len(accs)},{_fmt(mean)},{_fmt(std)}")
        else:
            lines.append(f"{run.name},0,,")
    (out / "summary.csv").write_text("\n".join(lines) + "\n")


def _write_gap_table(out: Path, plan: ExperimentPlan, rows):
    """Per-corruption baseline/treatment accuracies, gap, and the gap
    normalized by the clean gap."""
    def mean_acc(run_name, column):
        vals = [
            float(r[column]) for r in rows
            if r["run"] == run_name and r["status"] == "ok" and r.get(column)
        ]
        return statistics.fmean(vals) if vals else float("nan")

    base_run, ta_run = "baseline", "textadain"
    clean_col = f"acc_{cor.Kind.NONE.value}"
    clean_gap = mean_acc(ta_run, clean_col) - mean_acc(base_run, clean_col)
    lines = ["corruption,category,acc_baseline,acc_textadain,gap,normalized_gap"]
    for kind in cor.Kind:
        col = f"acc_{kind.value}"
        b = mean_acc(base_run, col)
        t = mean_acc(ta_run, col)
        gap = t - b
        norm = gap / clean_gap if clean_gap not in (0.0,) and np.isfinite(clean_gap) else float("nan")
        lines.append(
            f"{kind.value},{cor.CATEGORY[kind].value},{_fmt(b)},{_fmt(t)},"
            f"{_fmt(gap)},{_fmt(norm)}"
        )
    (out / "corruption_gaps.csv").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# First-principal-component intensity maps
# ---------------------------------------------------------------------------


def intensity_map(features: np.ndarray, tol: float = 1e-8, max_iter: int = 1000) -> np.ndarray:
    """Project per-location channel vectors of a (C, H, W) slice onto their
    first principal component; min-max normalize to [0, 1].

    The component is found by power iteration on the C x C covariance.  The
    projection's sign is fixed by forcing its first nonzero value positive
    (a channel-order-independent convention), and a constant input maps to
    all zeros.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 3:
        raise ValueError(f"expected (C, H, W) features, got shape {feats.shape}")
    c, h, w = feats.shape
    flat = feats.reshape(c, h * w)
    centered = flat - flat.mean(axis=1, keepdims=True)
    cov = (centered @ centered.T) / (h * w)
    if not np.any(np.abs(cov) > 0):
        return np.zeros((h, w), dtype=np.float32)
    v = np.ones(c) / np.sqrt(c)
    for _ in range(max_iter):
        nxt = cov @ v
        norm = np.linalg.norm(nxt)
        if norm == 0:
            return np.zeros((h, w), dtype=np.float32)
        nxt /= norm
        if np.linalg.norm(nxt - v) < tol:
            v = nxt
            break
        v = nxt
    proj = v @ centered
    nz = np.nonzero(np.abs(proj) > 1e-12 * max(1.0, np.abs(proj).max()))[0]
    if nz.size and proj[nz[0]] < 0:
        proj = -proj
    lo, hi = proj.min(), proj.max()
    if hi - lo <= 0:
        return np.zeros((h, w), dtype=np.float32)
    return ((proj - lo) / (hi - lo)).reshape(h, w).astype(np.float32)


# ---------------------------------------------------------------------------
# Microbenchmarks
# ---------------------------------------------------------------------------

BENCH_OPS = ("textadain", "copy", "adain", "moments")


def bench(op: str, shape: tuple[int, int, int, int], reps: int) -> list[dict]:
    """Median/p95 wall time and throughput; the windowed swap is always
    reported against a plain tensor copy baseline."""
    if reps < 1:
        raise ValueError("repetitions must be >= 1")
    if op not in BENCH_OPS:
        raise ValueError(f"unknown op {op!r} (want one of {BENCH_OPS})")
    from . import statmoments, statswap
    from .tensor import Axis

    rng = Rng(0)
    x = rng.normal(size=shape).astype(np.float32)
    y = rng.normal(size=shape).astype(np.float32)
    kept = frozenset({Axis.CHANNEL, Axis.HEIGHT})
    cfg = ta.TextAdaINConfig(p=1.0)

    def run_textadain():
        ta.forward(x, cfg, Rng(1), training=True)

    def run_copy():
        x.copy()

    def run_adain():
        statswap.adain(statswap.SwapPair(x, y), kept, 1e-4)

    def run_moments():
        statmoments.moments(x, kept, 1e-4)

    fns = {"textadain": run_textadain, "copy": run_copy,
           "adain": run_adain, "moments": run_moments}
    names = [op] if op == "copy" else [op, "copy"]
    reports = []
    for name in names:
        fn = fns[name]
        fn()  # warm up
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        times.sort()
        median = times[len(times) // 2]
        p95 = times[min(len(times) - 1, int(np.ceil(0.95 * len(times))) - 1)]
        elems = float(np.prod(shape))
        reports.append({
            "op": name,
            "shape": "x".join(str(d) for d in shape),
            "reps": reps,
            "median_s": median,
            "p95_s": p95,
            "elements_per_s": elems / median if median > 0 else float("inf"),
        })
    return reports
