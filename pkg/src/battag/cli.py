"""Command-line entry point.

Exit codes: 0 success, 1 training abort or failed check, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .data import generate_dataset
from .errors import BatError, ConfigError, TrainingAborted
from .gradcheck import grad_check
from .schedule import named_variant
from .training import emit_schedule, evaluate_checkpoint, sweep_lambda, train

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg = cfg.__class__.from_dict({**cfg.to_dict(), "output_dir": args.output_dir})
    rec = train(cfg, write=True, progress=not args.quiet)
    ev = rec.final.eval
    print(f"wrote {cfg.output_dir}: eval macro-F1 {ev.macro_f1:.4f} macro-F2 {ev.macro_f2:.4f}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    loss, rep = evaluate_checkpoint(cfg, args.checkpoint)
    print(json.dumps({"loss": loss, **rep.to_dict()}, indent=2))
    return EXIT_OK


def _cmd_grad_check(args) -> int:
    model_cfg = load_config(args.config).model if args.config else None
    rows = grad_check(model_cfg, n_batches=args.batches, seed=args.seed)
    failed = [r for r in rows if not r.passed]
    for r in rows if args.verbose else failed:
        print(r.line())
    print(f"{len(rows) - len(failed)}/{len(rows)} gradient checks passed")
    return EXIT_OK if not failed else EXIT_FAIL


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    try:
        lambdas = [float(x) for x in args.lambdas.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--lambdas must be comma-separated numbers: {exc}") from exc
    if not lambdas or min(lambdas) < 1:
        raise ConfigError("--lambdas needs at least one value, all >= 1")
    sweep_lambda(cfg, lambdas, write=True)
    print(Path(cfg.output_dir, "sweep.csv").read_text(), end="")
    return EXIT_OK


def _cmd_schedule(args) -> int:
    name = args.variant if args.mult is None else f"{args.variant}*{args.mult}"
    spec = named_variant(name, d_model=args.d_model, warmup=args.warmup)
    text = emit_schedule(spec, args.steps)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    data = generate_dataset(cfg.synthetic)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / "data.jsonl"
    data.save(out)
    print(f"wrote {len(data)} sequences to {out}; class counts {data.class_counts().tolist()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="battag", description="Imbalanced token tagging with BAT encoders.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train a model from a JSON config")
    s.add_argument("config")
    s.add_argument("--output-dir")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on the config's eval split")
    s.add_argument("config")
    s.add_argument("checkpoint")
    s.set_defaults(func=_cmd_eval)

    s = sub.add_parser("grad-check", help="finite-difference gradient checks")
    s.add_argument("config", nargs="?")
    s.add_argument("--batches", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=_cmd_grad_check)

    s = sub.add_parser("sweep-lambda", help="one training run per lambda")
    s.add_argument("config")
    s.add_argument("--lambdas", default="1,8,12,20,24,30")
    s.set_defaults(func=_cmd_sweep)

    s = sub.add_parser("emit-schedule", help="write step,lrate CSV for a schedule variant")
    s.add_argument("--variant", default="v1")
    s.add_argument("--mult", type=float)
    s.add_argument("--steps", type=int, default=20000)
    s.add_argument("--warmup", type=int, default=4000)
    s.add_argument("--d-model", type=int, default=128)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_schedule)

    s = sub.add_parser("gen-data", help="write the synthetic dataset as JSON lines")
    s.add_argument("config")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_gen_data)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (BatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
