from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np


class AutoregressiveModel(Protocol):
    """What the sampling and training code needs from a model.

    ``conditional_logits(conditioning, contexts)`` maps ``[B, T]`` conditioning
    tokens to ``[B, T, V]`` logits where row ``t`` sees only
    ``conditioning[:, :t]`` and the context. One call computes every row.
    """

    vocab_size: int

    def conditional_logits(self, conditioning: np.ndarray, contexts: Sequence | None = None) -> np.ndarray: ...


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits, axis=-1, keepdims=True)
    shifted = logits - m
    with np.errstate(divide="ignore"):
        return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits, axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def batched_logits(model: AutoregressiveModel, conditioning, contexts=None) -> np.ndarray:
    """Call ``model`` on a single sequence or a batch; returns matching rank."""
    cond = np.asarray(conditioning, dtype=np.int64)
    if cond.ndim == 1:
        ctx = None if contexts is None else [tuple(contexts)]
        return model.conditional_logits(cond[None, :], ctx)[0]
    return model.conditional_logits(cond, contexts)


class CountingModel:
    """Wraps a model and counts full inference invocations.

    Both ``conditional_logits`` and ``loss_and_grads`` count as one call,
    which is how the cost of the three training methods is compared.
    """

    def __init__(self, model):
        self.model = model
        self.calls = 0

    def __getattr__(self, name):
        return getattr(self.model, name)

    def conditional_logits(self, conditioning, contexts=None):
        self.calls += 1
        return self.model.conditional_logits(conditioning, contexts)

    def loss_and_grads(self, *args, **kwargs):
        self.calls += 1
        return self.model.loss_and_grads(*args, **kwargs)

    def reset(self) -> int:
        n, self.calls = self.calls, 0
        return n
