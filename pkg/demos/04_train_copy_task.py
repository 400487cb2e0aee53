"""Train a small Transformer on the copy task, with and without mixing.

Runs teacher forcing and one-pass parallel scheduled sampling from the
configs/ directory and prints the eval curve of each. Takes about two minutes
on one core. Pass a smaller step count as the first argument for a quick look.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

from parmix.harness.config import load_config
from parmix.harness.training import train

logging.basicConfig(level=logging.INFO, format="%(message)s")
steps = int(sys.argv[1]) if len(sys.argv) > 1 else None
configs = Path(__file__).resolve().parent.parent / "configs"

for name in ("copy_teacher_forcing.yaml", "copy_parallel.yaml"):
    overrides = {"run.output_dir": f"runs/{Path(name).stem}"}
    if steps:
        overrides.update({"run.total_steps": steps, "run.eval_interval": max(steps // 4, 1),
                          "mixing.warmup_steps": steps // 2, "mixing.total_steps": steps})
    config = load_config(configs / name, overrides)
    result = train(config)
    print(f"\n{config.method}")
    for r in result.records:
        print(f"  step {r.step:5d}  loss {r.loss:.4f}  p {r.p:.3f}  token acc {r.eval_token_accuracy:.3f}  "
              f"exact {r.eval_exact_match:.3f}")
