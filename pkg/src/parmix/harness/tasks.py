"""Synthetic sequence-to-sequence tasks over the content ids of a vocab."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Example, RngStream, StreamArray, Vocab

KINDS = ("copy", "reverse", "repeat-k", "parity-suffix")


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "copy"
    vocab_size: int = 16
    min_len: int = 20
    max_len: int = 20
    n_train: int = 10000
    n_eval: int = 200
    seed: int = 0
    repeat_k: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}; expected one of {KINDS}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.n_train < 1 or self.n_eval < 1:
            raise ValueError("dataset sizes must be positive")
        if self.repeat_k < 1:
            raise ValueError("repeat_k must be positive")
        if len(self.vocab.content_ids) < 2:
            raise ValueError("vocab_size leaves fewer than two content tokens")

    @property
    def vocab(self) -> Vocab:
        return Vocab.with_specials(self.vocab_size)

    @property
    def max_target_len(self) -> int:
        if self.kind == "repeat-k":
            return self.max_len * self.repeat_k
        if self.kind == "parity-suffix":
            return self.max_len + 1
        return self.max_len


def target_for(spec: TaskSpec, tokens: tuple[int, ...]) -> tuple[int, ...]:
    if spec.kind == "copy":
        return tokens
    if spec.kind == "reverse":
        return tokens[::-1]
    if spec.kind == "repeat-k":
        return tokens * spec.repeat_k
    content = spec.vocab.content_ids
    parity = sum(content.index(t) for t in tokens) % 2
    return tokens + (content[parity],)


def _generate(spec: TaskSpec, stream: RngStream, n: int) -> list[Example]:
    content = np.array(spec.vocab.content_ids)
    span = spec.max_len - spec.min_len + 1
    u = StreamArray.from_parent(stream, np.arange(n, dtype=np.uint64)).uniforms_at(np.arange(spec.max_len + 1))
    lengths = spec.min_len + np.minimum((u[:, 0] * span).astype(int), span - 1)
    idx = np.minimum((u[:, 1:] * len(content)).astype(int), len(content) - 1)
    out = []
    for i in range(n):
        tokens = tuple(int(t) for t in content[idx[i, : lengths[i]]])
        out.append(Example(tokens, target_for(spec, tokens)))
    return out


def make_task(spec: TaskSpec) -> tuple[list[Example], list[Example]]:
    """Deterministic ``(train, eval)`` example lists for ``spec``."""
    root = RngStream(spec.seed).split("task")
    return _generate(spec, root.split("train"), spec.n_train), _generate(spec, root.split("eval"), spec.n_eval)
