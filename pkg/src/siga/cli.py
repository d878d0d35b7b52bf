"""Command line entry points.

    siga gen       write a synthetic dataset
    siga train     fit a model, writing model.ckpt and metrics.tsv
    siga eval      score a checkpoint on a dataset
    siga viz       dump every intermediate mask for one image
    siga gradcheck run the gradient oracle suite

Flag precedence for train: defaults, then --config file, then explicit
flags.  All errors print one line to stderr and exit with status 2;
gradcheck failures exit with status 1.
"""

from __future__ import annotations

import argparse
import sys

from .config import TrainConfig, parse_config
from .data import GenConfig, generate, write_dataset
from .errors import SigaError


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="siga",
                                 description="glyph-attention sequence recognizer")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--height", type=int, default=16)
    g.add_argument("--width", type=int, default=64)
    g.add_argument("--min-len", type=int, default=1)
    g.add_argument("--max-len", type=int, default=7)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--min-contrast", type=float, default=0.4)
    g.add_argument("--invert-prob", type=float, default=0.5,
                   help="chance of swapping text/background polarity")

    t = sub.add_parser("train", help="train on a dataset directory")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="key = value overrides, applied before flags")
    t.add_argument("--steps", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--grad-clip", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--eval-interval", type=int)
    t.add_argument("--no-js", action="store_true",
                   help="baseline: recognition loss only")
    t.add_argument("--no-acfm", action="store_true",
                   help="keep the joint strategy but skip character fusion")
    t.add_argument("--no-align", action="store_true",
                   help="drop both alignment terms")
    t.add_argument("--no-align-cor", action="store_true")
    t.add_argument("--no-align-dif", action="store_true")

    e = sub.add_parser("eval", help="score a checkpoint")
    e.add_argument("--data", required=True)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--report", help="also write the summary to this file")

    v = sub.add_parser("viz", help="write mask panels for one image")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--image", required=True)
    v.add_argument("--out", required=True)

    c = sub.add_parser("gradcheck", help="run the gradient oracle suite")
    c.add_argument("--quick", action="store_true", help="per-op checks only")
    return ap


def _cmd_gen(args) -> int:
    cfg = GenConfig(height=args.height, width=args.width, count=args.count,
                    seed=args.seed, min_len=args.min_len, max_len=args.max_len,
                    noise_sigma=args.noise, min_contrast=args.min_contrast,
                    invert_prob=args.invert_prob)
    samples = generate(cfg)
    write_dataset(samples, args.out,
                  meta_extra={"seed": cfg.seed, "noise_sigma": cfg.noise_sigma})
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .train import train
    cfg = TrainConfig()
    if args.config:
        cfg = parse_config(args.config, cfg)
    for flag, field in (("steps", "steps"), ("lr", "lr"), ("grad_clip", "grad_clip"),
                        ("batch_size", "batch_size"), ("seed", "seed"),
                        ("eval_interval", "eval_interval")):
        val = getattr(args, flag)
        if val is not None:
            setattr(cfg, field, val)
    if args.no_js:
        cfg.enable_js = False
        cfg.enable_acfm = False
    if args.no_acfm:
        cfg.enable_acfm = False
    if args.no_align:
        cfg.align_cor = cfg.align_dif = False
    if args.no_align_cor:
        cfg.align_cor = False
    if args.no_align_dif:
        cfg.align_dif = False
    result = train(args.data, args.out, cfg)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"metrics:    {result.metrics_path}")
    print(f"train-subset accuracy {result.final_acc:.4f}, theta {result.final_theta:.4f}")
    return 0


def _cmd_eval(args) -> int:
    from .train import evaluate
    report = evaluate(args.data, args.ckpt)
    text = "\n".join(report.lines()) + "\n"
    sys.stdout.write(text)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            f.write(text)
    return 0


def _cmd_viz(args) -> int:
    from .viz import render_panels
    written = render_panels(args.ckpt, args.image, args.out)
    print(f"wrote {len(written)} panels to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradsuite import TOL, run_suite
    results = run_suite(quick=args.quick)
    worst = 0.0
    failed = 0
    for name, gap, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<28} max gap {gap:.3e}")
        worst = max(worst, gap)
        failed += not ok
    print(f"{len(results) - failed}/{len(results)} checks passed "
          f"(tolerance {TOL:.0e}, worst {worst:.3e})")
    return 1 if failed else 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"gen": _cmd_gen, "train": _cmd_train, "eval": _cmd_eval,
                "viz": _cmd_viz, "gradcheck": _cmd_gradcheck}
    try:
        return handlers[args.command](args)
    except SigaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
