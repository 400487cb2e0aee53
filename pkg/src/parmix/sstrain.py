"""Conditioning-sequence constructors for teacher forcing, sequential scheduled
sampling and parallel scheduled sampling, plus loss assembly.

Every function has a batch form working on :class:`~parmix.core.Batch` with one
stream per example, and a single-example convenience wrapper. Random draws are
addressed by ``(example stream, purpose, pass) @ position`` so results do not
depend on evaluation order or batch composition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Batch, Example, RngStream, StreamArray, categorical_from_uniform
from .models.base import log_softmax, softmax
from .schedule import MixingConfig, mixing_prob

METHODS = ("teacher-forcing", "sequential-ss", "parallel-ss")


@dataclass(frozen=True)
class PassState:
    """Pass ``k`` of parallel scheduled sampling (``k = 0`` is the gold sequence)."""

    k: int
    mixed: tuple[int, ...]
    sampled: tuple[int, ...] | None = None


@dataclass(frozen=True)
class ConditioningResult:
    mixed: tuple[int, ...]
    trace: list[PassState] = field(default_factory=list)
    coins: list[tuple[bool, ...]] = field(default_factory=list)


@dataclass
class BatchConditioning:
    """Batch result. ``mixed`` is ``[B, T]``; when traced, ``passes`` is
    ``[K+1, B, T]`` (pass 0 = gold), ``sampled`` and ``coins`` are ``[K, B, T]``
    (for sequential sampling ``K = 1``)."""

    mixed: np.ndarray
    passes: np.ndarray | None = None
    sampled: np.ndarray | None = None
    coins: np.ndarray | None = None


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mixing probability must lie in [0, 1], got {p}")


def example_streams(stream: RngStream, n: int) -> StreamArray:
    """Per-example streams ``stream.split(i)`` for ``i < n``."""
    return StreamArray.from_parent(stream, np.arange(n, dtype=np.uint64))


def _sample_rows(logits: np.ndarray, u: np.ndarray) -> np.ndarray:
    probs = softmax(np.asarray(logits, dtype=np.float64))
    return categorical_from_uniform(probs, u)


# ---------------------------------------------------------------- losses

def conditioned_nll(model, batch: Batch, conditioning: np.ndarray) -> np.ndarray:
    """Per-position ``-log p(gold_t | conditioning_{<t}, context)``, zero off-mask.

    One inference call, computed in 64-bit.
    """
    logits = model.conditional_logits(np.asarray(conditioning, dtype=np.int64), batch.contexts)
    logp = log_softmax(np.asarray(logits, dtype=np.float64))
    picked = np.take_along_axis(logp, batch.gold[..., None], axis=-1)[..., 0]
    return np.where(batch.mask, -picked, 0.0)


def conditioned_loss(model, example: Example, conditioning: Sequence[int]) -> float:
    """Total NLL of the gold target given a (possibly mixed) conditioning sequence."""
    batch = Batch.from_examples([example])
    cond = np.asarray(conditioning, dtype=np.int64)[None, :]
    return float(conditioned_nll(model, batch, cond).sum())


def teacher_forcing_loss(model, example: Example) -> float:
    """Total teacher-forced NLL ``-sum_t log p(y_t | y_{<t}, x)`` in one pass."""
    return conditioned_loss(model, example, example.target)


# ---------------------------------------------------------------- conditioning

def sequential_ss_batch(model, batch: Batch, p: float, streams: StreamArray,
                        keep_trace: bool = False) -> BatchConditioning:
    """Left-to-right mixing: ``T`` inference calls, each on the mixed prefix."""
    _check_p(p)
    gold, mask = batch.gold, batch.mask
    B, T = gold.shape
    if len(streams) != B:
        raise ValueError("one stream per example is required")
    u_sample = streams.split("seq-sample").uniforms_at(np.arange(T))
    u_coin = streams.split("seq-coin").uniforms_at(np.arange(T))
    mixed = gold.copy()
    sampled = np.zeros_like(gold)
    coins = np.zeros((B, T), dtype=bool)
    for t in range(T):
        logits = model.conditional_logits(mixed[:, : t + 1], batch.contexts)[:, t]
        sampled[:, t] = _sample_rows(logits, u_sample[:, t])
        coins[:, t] = (u_coin[:, t] < p) & mask[:, t]
        mixed[:, t] = np.where(coins[:, t], sampled[:, t], gold[:, t])
    if keep_trace:
        return BatchConditioning(mixed, np.stack([gold, mixed]), sampled[None], coins[None])
    return BatchConditioning(mixed)


def parallel_ss_batch(model, batch: Batch, p: float, passes: int, streams: StreamArray,
                      keep_trace: bool = False, fixed_coins: bool = False) -> BatchConditioning:
    """``passes`` rounds of parallel sample-and-mix.

    Pass ``k`` samples every position conditioned on pass ``k-1``'s mixture,
    freezes positions before ``k`` and mixes the rest with gold. With
    ``fixed_coins`` one coin mask is shared by all passes instead of redrawn.
    """
    _check_p(p)
    if passes < 1:
        raise ValueError("passes must be >= 1")
    gold, mask = batch.gold, batch.mask
    B, T = gold.shape
    if len(streams) != B:
        raise ValueError("one stream per example is required")
    positions = np.arange(T)
    sample_streams = streams.split("par-sample")
    coin_streams = streams.split("par-coin")
    prev = gold.copy()
    trace, samples, coin_log = [gold.copy()], [], []
    for k in range(1, passes + 1):
        logits = model.conditional_logits(prev, batch.contexts)
        sampled = _sample_rows(logits, sample_streams.split(k).uniforms_at(positions))
        u_coin = (coin_streams if fixed_coins else coin_streams.split(k)).uniforms_at(positions)
        take = (u_coin < p) & mask
        mixed = np.where(take, sampled, gold)
        frozen = positions < k - 1
        mixed[:, frozen] = prev[:, frozen]
        prev = mixed
        if keep_trace:
            trace.append(mixed)
            samples.append(sampled)
            coin_log.append(take & ~frozen[None, :])
    if keep_trace:
        return BatchConditioning(prev, np.stack(trace), np.stack(samples), np.stack(coin_log))
    return BatchConditioning(prev)


def _single(example: Example, stream: RngStream) -> tuple[Batch, StreamArray]:
    return Batch.from_examples([example]), StreamArray.of([stream])


def _to_result(res: BatchConditioning) -> ConditioningResult:
    mixed = tuple(int(t) for t in res.mixed[0])
    trace = []
    for k, row in enumerate(res.passes[:, 0]):
        sampled = None if k == 0 else tuple(int(t) for t in res.sampled[k - 1, 0])
        trace.append(PassState(k, tuple(int(t) for t in row), sampled))
    coins = [tuple(bool(c) for c in row) for row in res.coins[:, 0]]
    return ConditioningResult(mixed, trace, coins)


def sequential_ss(model, example: Example, p: float, stream: RngStream) -> ConditioningResult:
    batch, streams = _single(example, stream)
    return _to_result(sequential_ss_batch(model, batch, p, streams, keep_trace=True))


def parallel_ss(model, example: Example, p: float, K: int, stream: RngStream,
                fixed_coins: bool = False) -> ConditioningResult:
    batch, streams = _single(example, stream)
    res = parallel_ss_batch(model, batch, p, K, streams, keep_trace=True, fixed_coins=fixed_coins)
    return _to_result(res)


# ---------------------------------------------------------------- training steps

def build_conditioning(model, batch: Batch, method: str, p: float, passes: int,
                       stream: RngStream, fixed_coins: bool = False) -> np.ndarray:
    if method == "teacher-forcing":
        return batch.gold
    streams = example_streams(stream, len(batch))
    if method == "parallel-ss":
        return parallel_ss_batch(model, batch, p, passes, streams, fixed_coins=fixed_coins).mixed
    if method == "sequential-ss":
        return sequential_ss_batch(model, batch, p, streams).mixed
    raise ValueError(f"unknown training method {method!r}; expected one of {METHODS}")


def training_step(model, batch: Batch, method: str, p: float, passes: int, stream: RngStream,
                  fixed_coins: bool = False):
    """``(loss, grads)`` for one batch. The loss always scores gold targets;
    sampled conditioning tokens are constants (no gradient through sampling)."""
    cond = build_conditioning(model, batch, method, p, passes, stream, fixed_coins)
    return model.loss_and_grads(cond, batch.gold, batch.mask, batch.contexts)


def ss_training_step(model, batch: Batch, config: MixingConfig, step: int, stream: RngStream):
    """Parallel scheduled sampling step with ``p`` taken from the schedule."""
    p = mixing_prob(config, step)
    return training_step(model, batch, "parallel-ss", p, config.passes, stream, config.fixed_coins)
