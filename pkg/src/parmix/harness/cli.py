"""Command line entry point: ``parmix <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from ..core import RngStream
from ..exactdist import proposal_sweep, theorem_instance, verify_theorem, write_sweep_csv
from ..models import checkpoint
from ..models.checkpoint import CheckpointError
from ..models.neural import ModelDims
from ..sstrain import METHODS
from .benchmark import benchmark, speed_ratios, write_benchmark_csv
from .config import ConfigError, load_config
from .evaluation import evaluate, parse_decoder, predict
from .tasks import make_task
from .training import TrainingDiverged, train

DEFAULT_P_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_K_GRID = (1, 2, 3, 4, 5)


class CliError(Exception):
    pass


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"--set expects section.key=value, got {item!r}")
        out[key] = yaml.safe_load(value)
    return out


def _overrides(args) -> dict:
    out = _parse_set(getattr(args, "set", None))
    for flag, key in (("seed", "run.seed"), ("output_dir", "run.output_dir"), ("method", "run.method"),
                      ("total_steps", "run.total_steps")):
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = str(value) if flag == "output_dir" else value
    return out


def cmd_train(args) -> int:
    config = load_config(args.config, _overrides(args))
    result = train(config)
    last = result.records[-1]
    print(f"trained {config.method} for {config.total_steps} steps: loss {last.loss:.4f}, "
          f"eval token accuracy {last.eval_token_accuracy:.4f}")
    print(f"metrics: {result.metrics_path}\ncheckpoint: {result.checkpoint_path}")
    return 0


def _load_model(path):
    path = Path(path)
    if not path.is_file():
        raise CliError(f"checkpoint not found: {path}")
    return checkpoint.load(path)


def cmd_eval(args) -> int:
    parse_decoder(args.decoder)
    model = _load_model(args.checkpoint)
    config = load_config(args.config, _overrides(args))
    _, eval_set = make_task(config.task)
    metrics = evaluate(model, eval_set, args.decoder, RngStream(config.seed).split("eval-decode"))
    print(json.dumps(metrics.as_dict()))
    return 0


def cmd_decode(args) -> int:
    parse_decoder(args.decoder)
    model = _load_model(args.checkpoint)
    tokens = tuple(int(t) for t in args.input.replace(",", " ").split())
    max_len = args.max_len or 2 * max(len(tokens), 1)
    (pred,) = predict(model, [tokens], [max_len], args.decoder, RngStream(args.seed))
    print(" ".join(str(t) for t in pred))
    return 0


def cmd_verify(args) -> int:
    failures = 0
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        model, gold = theorem_instance(args.vocab, args.len, seed, args.concentration)
        report = verify_theorem(model, gold, args.len)
        if args.verbose:
            print(f"seed {seed}: " + report.format())
        if not report.passed:
            failures += 1
            print(f"seed {seed}: FAIL\n{report.format()}", file=sys.stderr)
    if failures:
        print(f"FAIL ({failures}/{args.seeds} instances)")
        return 1
    print(f"PASS ({args.seeds} instances, V={args.vocab}, T={args.len}, K in 1..{args.len + 2})")
    return 0


def cmd_analyze(args) -> int:
    model, gold = theorem_instance(args.vocab, args.len, args.seed, args.concentration)
    rows = proposal_sweep(model, gold, args.p_grid, args.k_grid)
    out = Path(args.output_dir) / "proposal_sweep.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out)
    print(f"gold={list(gold)}; wrote {len(rows)} rows to {out}")
    return 0


def cmd_benchmark(args) -> int:
    dims = load_config(args.config).model if args.config else ModelDims()
    rows = benchmark(args.methods, args.lengths, args.batch_size, args.passes, args.p, args.steps,
                     args.sequential_steps, dims, args.vocab, args.seed)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_benchmark_csv(rows, out_dir / "benchmark.csv")
    meta = {"blas_threads": {f"{r.method}@{r.length}": r.blas_threads for r in rows},
            "batch_size": args.batch_size, "passes": args.passes, "p": args.p, "steps": args.steps}
    (out_dir / "benchmark_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    for r in rows:
        print(f"{r.method:16s} T={r.length:<4d} {r.steps_per_sec:9.3f} steps/s  calls={r.inference_calls} "
              f"threads={r.blas_threads}")
    for den in ("sequential-ss", "teacher-forcing"):
        ratios = speed_ratios(rows, "parallel-ss", den)
        if ratios:
            print(f"parallel-ss / {den}: " + ", ".join(f"T={L}: {v:.2f}x" for L, v in sorted(ratios.items())))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parmix", description="Parallel and sequential scheduled sampling toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")

    p = sub.add_parser("train", help="train a model from a config file")
    run_flags(p)
    p.add_argument("--output-dir")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--total-steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the config's eval split")
    run_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--decoder", default="greedy")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decode", help="decode one input sequence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="space or comma separated token ids")
    p.add_argument("--decoder", default="greedy")
    p.add_argument("--max-len", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("verify-theorem", help="check q^K == ancestral at p=1, K>=T by enumeration")
    p.add_argument("--vocab", type=int, default=3)
    p.add_argument("--len", type=int, default=3)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--concentration", type=float, default=1.0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("analyze-proposal", help="TV/KL of the parallel proposal over a (p, K) grid")
    p.add_argument("--vocab", type=int, default=3)
    p.add_argument("--len", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--concentration", type=float, default=1.0)
    p.add_argument("--p-grid", type=float, nargs="+", default=list(DEFAULT_P_GRID))
    p.add_argument("--k-grid", type=int, nargs="+", default=list(DEFAULT_K_GRID))
    p.add_argument("--output-dir", default=".")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("benchmark", help="training steps/sec per method and target length")
    p.add_argument("--config")
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--lengths", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--sequential-steps", type=int, default=5)
    p.add_argument("--vocab", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default=".")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, CliError, CheckpointError, TrainingDiverged, ValueError) as exc:
        print(f"parmix {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
