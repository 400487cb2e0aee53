from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import Batch, Example, RngStream
from ..models import checkpoint
from ..models.neural import MiniNeuralModel
from ..models.optim import AdamState, apply_update
from ..schedule import mixing_prob
from ..sstrain import training_step
from .config import RunConfig, dump_config
from .evaluation import evaluate
from .tasks import make_task

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.log"
CHECKPOINT_FILE = "model.ckpt"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class MetricsRecord:
    step: int
    loss: float
    p: float
    tokens_per_sec: float | None
    steps_per_sec: float | None
    eval_token_accuracy: float
    eval_exact_match: float
    eval_edit_distance: float

    def to_line(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))


@dataclass
class TrainResult:
    model: MiniNeuralModel
    losses: list[float] = field(default_factory=list)
    records: list[MetricsRecord] = field(default_factory=list)
    checkpoint_path: Path | None = None
    metrics_path: Path | None = None


def sample_batch(dataset: list[Example], batch_size: int, stream: RngStream, end: int, pad: int) -> Batch:
    u, _ = stream.uniforms(batch_size)
    idx = np.minimum((u * len(dataset)).astype(int), len(dataset) - 1)
    return Batch.from_examples([dataset[i] for i in idx], fill=pad).with_target_end(end, fill=pad)


def read_metrics(path) -> list[dict]:
    """Parse a metrics log; each line stands alone, so partial logs parse too."""
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(json.loads(line))
    return out


def train(config: RunConfig, write_files: bool = True) -> TrainResult:
    """Run ``config.total_steps`` optimizer steps and append one metrics record
    per eval interval. Reproducible bit-for-bit from ``(config, seed)``."""
    vocab = config.task.vocab
    train_set, eval_set = make_task(config.task)
    root = RngStream(config.seed)
    model = MiniNeuralModel.init(vocab, config.model, root.split("init"))
    state = AdamState()
    result = TrainResult(model)

    out_dir = Path(config.output_dir)
    metrics_fh = None
    if write_files:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.yaml").write_text(dump_config(config))
        result.metrics_path = out_dir / METRICS_FILE
        metrics_fh = result.metrics_path.open("w")

    passes = config.mixing.passes
    interval_start = time.perf_counter()
    interval_tokens = 0
    interval_steps = 0
    try:
        for step in range(config.total_steps):
            step_stream = root.split("step").split(step)
            batch = sample_batch(train_set, config.batch_size, step_stream.split("batch"), vocab.end, vocab.pad)
            p = 0.0 if config.method == "teacher-forcing" else mixing_prob(config.mixing, step)
            loss, grads = training_step(model, batch, config.method, p, passes, step_stream.split("mix"),
                                        config.mixing.fixed_coins)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss {loss}")
            apply_update(model, grads, state, lr=config.learning_rate)
            result.losses.append(loss)
            interval_tokens += int(batch.mask.sum())
            interval_steps += 1

            last = step + 1 == config.total_steps
            if (step + 1) % config.eval_interval == 0 or last:
                elapsed = time.perf_counter() - interval_start
                metrics = evaluate(model, eval_set, "greedy")
                timed = config.record_timing and elapsed > 0
                record = MetricsRecord(
                    step=step + 1,
                    loss=loss,
                    p=p,
                    tokens_per_sec=interval_tokens / elapsed if timed else None,
                    steps_per_sec=interval_steps / elapsed if timed else None,
                    eval_token_accuracy=metrics.token_accuracy,
                    eval_exact_match=metrics.exact_match,
                    eval_edit_distance=metrics.edit_distance,
                )
                result.records.append(record)
                log.info("step %d loss %.4f p %.3f acc %.4f", step + 1, loss, p, metrics.token_accuracy)
                if metrics_fh:
                    metrics_fh.write(record.to_line() + "\n")
                    metrics_fh.flush()
                interval_start = time.perf_counter()
                interval_tokens = interval_steps = 0
    except FloatingPointError as exc:
        if metrics_fh:
            metrics_fh.write(json.dumps({"step": len(result.losses) + 1, "error": str(exc)}) + "\n")
        raise TrainingDiverged(f"step {len(result.losses) + 1}: {exc}") from exc
    finally:
        if metrics_fh:
            metrics_fh.close()

    if write_files:
        result.checkpoint_path = checkpoint.save(model, out_dir / CHECKPOINT_FILE)
    return result
