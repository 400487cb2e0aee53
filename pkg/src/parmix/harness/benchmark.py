"""Wall-clock training throughput of the three conditioning methods.

Each timed step is a full optimizer step (conditioning + loss/grads + Adam) on
an identical model and batch. Sequential scheduled sampling runs with BLAS
pinned to one thread; the parallel methods keep the platform default.
"""

from __future__ import annotations

import csv
import time
from contextlib import nullcontext
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_info, threadpool_limits

from ..core import Batch, RngStream, StreamArray, Vocab
from ..models.base import CountingModel
from ..models.neural import MiniNeuralModel, ModelDims
from ..models.optim import AdamState, apply_update
from ..sstrain import METHODS, training_step


@dataclass(frozen=True)
class BenchmarkRow:
    method: str
    length: int
    steps_per_sec: float
    inference_calls: int
    blas_threads: int


def expected_calls(method: str, length: int, passes: int) -> int:
    """Inference calls per step: the loss pass plus any sampling passes."""
    return {"teacher-forcing": 1, "parallel-ss": passes + 1, "sequential-ss": length + 1}[method]


def random_batch(vocab: Vocab, batch_size: int, length: int, stream: RngStream) -> Batch:
    content = np.array(vocab.content_ids)
    u = StreamArray.from_parent(stream, np.arange(batch_size, dtype=np.uint64)).uniforms_at(np.arange(length))
    gold = content[np.minimum((u * len(content)).astype(int), len(content) - 1)]
    return Batch(((),) * batch_size, gold.astype(np.int64), np.ones_like(gold, dtype=bool))


def _current_threads() -> int:
    counts = [info.get("num_threads", 1) for info in threadpool_info()]
    return max(counts) if counts else 1


def middle_rate(durations: Sequence[float], keep: float = 0.8) -> float:
    """Steps/sec over the middle ``keep`` fraction of the step durations (in
    run order), dropping warm-up and tail jitter."""
    n = len(durations)
    drop = int(round(n * (1.0 - keep) / 2))
    kept = durations[drop : n - drop] if n - 2 * drop > 0 else durations
    return len(kept) / float(sum(kept))


def measure(method: str, length: int, batch_size: int = 32, passes: int = 1, p: float = 0.5,
            steps: int = 20, dims: ModelDims = ModelDims(), vocab_size: int = 16, seed: int = 0) -> BenchmarkRow:
    vocab = Vocab.with_specials(vocab_size)
    root = RngStream(seed)
    model = CountingModel(MiniNeuralModel.init(vocab, dims, root.split("init")))
    batch = random_batch(vocab, batch_size, length, root.split("data"))
    state = AdamState()
    pin = threadpool_limits(limits=1) if method == "sequential-ss" else nullcontext()
    durations = []
    calls = None
    with pin:
        threads = _current_threads()
        for step in range(steps):
            model.reset()
            t0 = time.perf_counter()
            _, grads = training_step(model, batch, method, p, passes, root.split("step").split(step))
            apply_update(model.model, grads, state)
            durations.append(time.perf_counter() - t0)
            n = model.reset()
            if calls is None:
                calls = n
            elif n != calls:
                raise RuntimeError(f"{method}: inference calls changed between steps ({calls} vs {n})")
    return BenchmarkRow(method, length, middle_rate(durations), calls, threads)


def benchmark(methods: Iterable[str] = METHODS, lengths: Iterable[int] = (16, 32, 64), batch_size: int = 32,
              passes: int = 1, p: float = 0.5, steps: int = 20, sequential_steps: int | None = None,
              dims: ModelDims = ModelDims(), vocab_size: int = 16, seed: int = 0) -> list[BenchmarkRow]:
    """Run :func:`measure` for every (method, length), one at a time."""
    rows = []
    for length in lengths:
        for method in methods:
            if method not in METHODS:
                raise ValueError(f"unknown method {method!r}")
            n = sequential_steps if (method == "sequential-ss" and sequential_steps) else steps
            rows.append(measure(method, length, batch_size, passes, p, n, dims, vocab_size, seed))
    return rows


def speed_ratios(rows: Sequence[BenchmarkRow], num: str, den: str) -> dict[int, float]:
    by = {(r.method, r.length): r.steps_per_sec for r in rows}
    return {L: by[(num, L)] / by[(den, L)] for (m, L) in by if m == num and (den, L) in by}


def write_benchmark_csv(rows: Sequence[BenchmarkRow], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "length", "steps_per_sec", "inference_calls"])
        for r in rows:
            writer.writerow([r.method, r.length, f"{r.steps_per_sec:.6g}", r.inference_calls])
    return path


def rows_as_dicts(rows: Sequence[BenchmarkRow]) -> list[dict]:
    return [asdict(r) for r in rows]
