from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..core import Example, RngStream, StreamArray
from ..decoding import decode_beam, decode_greedy_batch, decode_sample_batch


@dataclass(frozen=True)
class EvalMetrics:
    token_accuracy: float
    exact_match: float
    edit_distance: float
    n: int

    def as_dict(self) -> dict:
        return asdict(self)


def levenshtein(a: Sequence[int], b: Sequence[int]) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def score(predictions: Sequence[Sequence[int]], golds: Sequence[Sequence[int]]) -> EvalMetrics:
    """Token accuracy counts position-wise matches over the overlap and divides
    by the total gold length, so an empty prediction scores 0."""
    if len(predictions) != len(golds) or not golds:
        raise ValueError("need one prediction per gold sequence")
    hits = sum(sum(int(p == g) for p, g in zip(pred, gold)) for pred, gold in zip(predictions, golds))
    total = sum(len(g) for g in golds)
    exact = sum(tuple(p) == tuple(g) for p, g in zip(predictions, golds))
    edits = [levenshtein(p, g) for p, g in zip(predictions, golds)]
    return EvalMetrics(hits / total, exact / len(golds), float(np.mean(edits)), len(golds))


def parse_decoder(decoder: str) -> tuple[str, int]:
    if decoder in ("greedy", "sample"):
        return decoder, 1
    if decoder.startswith("beam-"):
        width = int(decoder.split("-", 1)[1])
        if width < 1:
            raise ValueError("beam width must be >= 1")
        return "beam", width
    raise ValueError(f"unknown decoder {decoder!r}; expected greedy, sample or beam-<B>")


def predict(model, contexts: Sequence[Sequence[int]], max_lens: Sequence[int], decoder: str = "greedy",
            stream: RngStream | None = None) -> list[tuple[int, ...]]:
    """Decode each context, stopping at the model's end token or ``max_lens[i]``."""
    kind, width = parse_decoder(decoder)
    end = model.vocab.end
    limit = max(max_lens)
    contexts = [tuple(c) for c in contexts]
    if kind == "greedy":
        preds = decode_greedy_batch(model, contexts, limit, end)
    elif kind == "sample":
        streams = StreamArray.from_parent(stream or RngStream(0), np.arange(len(contexts), dtype=np.uint64))
        preds = decode_sample_batch(model, contexts, limit, streams, end)
    else:
        preds = [decode_beam(model, c, width, m, end) for c, m in zip(contexts, max_lens)]
    return [p[:m] for p, m in zip(preds, max_lens)]


def evaluate(model, dataset: Sequence[Example], decoder: str = "greedy", stream: RngStream | None = None) -> EvalMetrics:
    """Decode every example's input and score against its target.

    Predictions are capped at twice the gold length.
    """
    golds = [e.target for e in dataset]
    preds = predict(model, [e.input for e in dataset], [2 * len(g) for g in golds], decoder, stream)
    return score(preds, golds)
