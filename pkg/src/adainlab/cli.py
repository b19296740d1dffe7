"""``lab`` command line: train, eval, sweep, gradcheck, corrupt, featmap, bench.

Configuration is flat ``key=value`` text; ``--set key=value`` flags override
file keys.  Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import corruptions as cor
from . import experiments as exp
from . import gradcheck as gc
from . import statswap
from . import textadain as ta
from .config import parse_assignment, parse_config_text, train_config_from_flat
from .tensor import Axis, Rng
from .toyocr import evaluate as eval_mod
from .toyocr import train as train_mod

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _flat_config(args) -> dict[str, str]:
    flat: dict[str, str] = {}
    if getattr(args, "config", None):
        flat.update(parse_config_text(Path(args.config).read_text()))
    for assignment in getattr(args, "set", None) or []:
        key, value = parse_assignment(assignment)
        flat[key] = value
    return flat


def _parse_shape(text: str) -> tuple[int, int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 4:
        raise ValueError(f"shape must be BxCxHxW, got {text!r}")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


def cmd_train(args) -> int:
    cfg = train_config_from_flat(_flat_config(args))
    result = train_mod.train(cfg, out_dir=args.out)
    for it, loss, acc in result.metrics:
        print(f"iter {it}: loss {loss:.4f} val_acc {acc:.4f}")
    print(f"final val_word_acc {result.final_val_acc:.4f}")
    return 0


def cmd_eval(args) -> int:
    kind = cor.Kind(args.kind)
    spec = cor.default_spec(kind, seed=args.seed)
    acc = eval_mod.evaluate_checkpoint(args.ckpt, spec, seed=args.seed, n=args.n)
    print(f"{kind.value} accuracy {acc:.4f}")
    return 0


def cmd_sweep(args) -> int:
    base = _flat_config(args)
    seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    if args.plan:
        plan = exp.plan_from_text(Path(args.plan).read_text(), out_dir=args.out)
    else:
        if not args.out:
            raise ValueError("--out is required with --preset")
        plan = exp.preset_plan(args.preset, args.out, seeds=seeds, base=base)
    path = exp.run_sweep(plan)
    print(f"wrote {path}")
    return 0


def cmd_gradcheck(args) -> int:
    report = _gradcheck_report(args.op, _parse_shape(args.shape), args.seed)
    print(f"op {args.op} shape {args.shape} seed {args.seed}")
    print(f"max_rel_error {report.max_rel_error:.3e}")
    print(f"mean_step {float(report.h.mean()):.3e}")
    tol = 1e-5 if args.op == "ctc" else 1e-6
    status = "PASS" if report.max_rel_error < tol else "FAIL"
    print(f"{status} (tolerance {tol:g})")
    return 0 if status == "PASS" else RUNTIME_ERROR


def _gradcheck_report(op: str, shape, seed: int) -> gc.FiniteDiffReport:
    """Check d(sum of squares of op output)/d input against central diffs."""
    rng = Rng(seed)
    x0 = rng.normal(size=shape)
    kept = frozenset({Axis.CHANNEL, Axis.HEIGHT})

    if op == "adain":
        donor = rng.normal(size=shape)

        def build(xv):
            xn = gc.leaf(xv)
            out = gc.adain_op(xn, gc.constant(donor), kept, 1e-4)
            return xn, gc.sum_all(gc.mul(out, out))

    elif op == "textadain":
        cfg = ta.TextAdaINConfig(p=1.0, k=2)
        return gc.check_textadain_vjp(x0, cfg, seed)

    elif op == "instance_norm":
        gamma = rng.normal(size=shape[1])
        beta = rng.normal(size=shape[1])

        def build(xv):
            xn = gc.leaf(xv)
            out = gc.instance_norm_op(xn, gc.constant(gamma), gc.constant(beta), 1e-4)
            return xn, gc.sum_all(gc.mul(out, out))

    elif op == "relu":

        def build(xv):
            xn = gc.leaf(xv)
            out = gc.relu(xn)
            return xn, gc.sum_all(gc.mul(out, out))

    elif op == "conv2d":
        w = rng.normal(size=(3, shape[1], 3, 3))
        b = rng.normal(size=3)

        def build(xv):
            xn = gc.leaf(xv)
            out = gc.conv2d(xn, gc.constant(w), gc.constant(b))
            return xn, gc.sum_all(gc.mul(out, out))

    elif op == "maxpool":

        def build(xv):
            xn = gc.leaf(xv)
            out = gc.maxpool2d(xn, 2 if shape[2] % 2 == 0 else 1, 1)
            return xn, gc.sum_all(gc.mul(out, out))

    elif op == "affine":
        w = rng.normal(size=(6, shape[1]))
        b = rng.normal(size=6)

        def build(xv):
            xn = gc.leaf(xv)
            out = gc.channel_affine(xn, gc.constant(w), gc.constant(b))
            return xn, gc.sum_all(gc.mul(out, out))

    elif op == "log_softmax":

        def build(xv):
            xn = gc.leaf(xv)
            out = gc.log_softmax_c(xn)
            return xn, gc.sum_all(gc.mul(out, out))

    elif op == "ctc":
        b, a1, h, t = shape
        if h != 1:
            raise ValueError("ctc expects shape Bx(A+1)x1xT")
        label_rng = Rng(seed).derive(1)
        labels = [
            [1 + label_rng.randint(a1 - 1) for _ in range(min(2, t // 2))]
            for _ in range(b)
        ]

        def build(xv):
            xn = gc.leaf(xv)
            logp = gc.log_softmax_c(xn)
            return xn, gc.ctc_op(logp, labels)

    else:
        raise ValueError(f"unknown op {op!r}")

    xn, root = build(x0)
    gc.backward(root)
    analytic = xn.grad

    def f(xv):
        _, r = build(xv)
        return float(r.value)

    return gc.check_gradient(f, x0, analytic)


def cmd_corrupt(args) -> int:
    kind = cor.Kind(args.kind)
    spec = cor.default_spec(kind, seed=args.seed)
    img = cor.read_image(args.infile)
    out = cor.apply(img, spec, Rng(args.seed))
    cor.write_image(args.outfile, out)
    print(f"wrote {args.outfile}")
    return 0


def cmd_featmap(args) -> int:
    params, _ = train_mod.load_checkpoint(args.ckpt)
    img = cor.read_image(args.infile)
    if img.shape[2] == 3:
        img = img.mean(axis=2, keepdims=True)
    batch = img[:, :, 0][None, None, :, :].astype(np.float32)
    xn = gc.leaf(batch, requires_grad=False)
    conv1 = gc.conv2d(
        xn, gc.constant(params["conv0_w"]), gc.constant(params["conv0_b"]), pad=1
    )
    fmap = exp.intensity_map(conv1.value[0])
    cor.write_image(args.outfile, fmap[:, :, None])
    print(f"wrote {args.outfile}")
    return 0


def cmd_bench(args) -> int:
    reports = exp.bench(args.op, _parse_shape(args.shape), args.reps)
    for r in reports:
        print(
            f"{r['op']:<10} shape {r['shape']:<16} reps {r['reps']:<5} "
            f"median {r['median_s'] * 1e3:.3f} ms  p95 {r['p95_s'] * 1e3:.3f} ms  "
            f"{r['elements_per_s'] / 1e6:.1f} Melem/s"
        )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the toy recognizer")
    p_train.add_argument("--config", help="flat key=value config file")
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_train.add_argument("--out", help="checkpoint/metrics directory")
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint under a corruption")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--kind", default="none",
                        choices=[k.value for k in cor.Kind])
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--n", type=int, default=200)
    p_eval.set_defaults(fn=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="run an experiment plan")
    p_sweep.add_argument("--preset", choices=["p", "k", "axis", "donor", "corruption"])
    p_sweep.add_argument("--plan", help="plan file (overrides --preset)")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.add_argument("--seeds", default="0,1,2")
    p_sweep.add_argument("--config", help="base config file")
    p_sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_gc = sub.add_parser("gradcheck", help="finite-difference check one op")
    p_gc.add_argument("--op", required=True)
    p_gc.add_argument("--shape", default="2x3x4x6", metavar="BxCxHxW")
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.set_defaults(fn=cmd_gradcheck)

    p_cor = sub.add_parser("corrupt", help="corrupt a PGM/PPM image")
    p_cor.add_argument("--kind", required=True, choices=[k.value for k in cor.Kind])
    p_cor.add_argument("--seed", type=int, default=0)
    p_cor.add_argument("--in", dest="infile", required=True)
    p_cor.add_argument("--out", dest="outfile", required=True)
    p_cor.set_defaults(fn=cmd_corrupt)

    p_map = sub.add_parser("featmap", help="first-conv-layer intensity map")
    p_map.add_argument("--ckpt", required=True)
    p_map.add_argument("--in", dest="infile", required=True)
    p_map.add_argument("--out", dest="outfile", required=True)
    p_map.set_defaults(fn=cmd_featmap)

    p_bench = sub.add_parser("bench", help="microbenchmark kernels")
    p_bench.add_argument("--op", default="textadain")
    p_bench.add_argument("--shape", default="16x64x8x32", metavar="BxCxHxW")
    p_bench.add_argument("--reps", type=int, default=30)
    p_bench.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
