"""Greedy, ancestral-sample and beam decoders.

Decoders re-run the model on the whole prefix at every step (no cache). Ties
go to the lowest token id. An emitted ``end_id`` stops decoding and is not
included in the returned sequence.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import RngStream, StreamArray, categorical_from_uniform, draw_categorical
from .models.base import batched_logits, log_softmax, softmax


def _next_logits(model, prefix: Sequence[int], context) -> np.ndarray:
    cond = np.array(list(prefix) + [0], dtype=np.int64)
    return np.asarray(batched_logits(model, cond, context)[-1], dtype=np.float64)


def decode_greedy(model, context: Sequence[int] = (), max_len: int = 1, end_id: int | None = None) -> tuple[int, ...]:
    out: list[int] = []
    for _ in range(max_len):
        tok = int(np.argmax(log_softmax(_next_logits(model, out, context))))
        if tok == end_id:
            break
        out.append(tok)
    return tuple(out)


def decode_sample(model, context: Sequence[int] = (), max_len: int = 1, stream: RngStream | None = None,
                  end_id: int | None = None) -> tuple[int, ...]:
    """Ancestral sampling at temperature 1; one draw per emitted token."""
    stream = stream if stream is not None else RngStream(0)
    out: list[int] = []
    for _ in range(max_len):
        tok, stream = draw_categorical(stream, softmax(_next_logits(model, out, context)))
        if tok == end_id:
            break
        out.append(tok)
    return tuple(out)


def _batch_decode(model, contexts, max_len, end_id, choose):
    B = len(contexts)
    seqs = np.zeros((B, max_len + 1), dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    lengths = np.full(B, max_len)
    for t in range(max_len):
        logits = np.asarray(model.conditional_logits(seqs[:, : t + 1], contexts)[:, t], dtype=np.float64)
        tok = choose(logits, t)
        if end_id is not None:
            ended = (tok == end_id) & ~done
            lengths[ended] = t
            done |= ended
        seqs[:, t] = np.where(done, 0, tok)
        if done.all():
            break
    return [tuple(int(x) for x in seqs[b, : lengths[b]]) for b in range(B)]


def decode_greedy_batch(model, contexts: Sequence[Sequence[int]], max_len: int,
                        end_id: int | None = None) -> list[tuple[int, ...]]:
    return _batch_decode(model, contexts, max_len, end_id, lambda logits, t: np.argmax(log_softmax(logits), axis=-1))


def decode_sample_batch(model, contexts: Sequence[Sequence[int]], max_len: int, streams: StreamArray,
                        end_id: int | None = None) -> list[tuple[int, ...]]:
    """Vectorized ancestral sampling; example ``i`` draws position ``t`` at
    counter ``t`` of ``streams[i]``."""
    u = streams.uniforms_at(np.arange(max_len))
    return _batch_decode(model, contexts, max_len, end_id,
                         lambda logits, t: categorical_from_uniform(softmax(logits), u[:, t]))


def sequence_logprob(model, seq: Sequence[int], context: Sequence[int] = (), end_id: int | None = None) -> float:
    """``log p(seq [, end] | context)`` under the model."""
    toks = list(seq) + ([end_id] if end_id is not None else [])
    logp = log_softmax(np.asarray(batched_logits(model, np.array(toks, dtype=np.int64), context), dtype=np.float64))
    return float(sum(logp[t, tok] for t, tok in enumerate(toks)))


def decode_beam(model, context: Sequence[int] = (), beam_width: int = 1, max_len: int = 1,
                end_id: int | None = None, length_norm: bool = False) -> tuple[int, ...]:
    """Beam search returning the best finished hypothesis.

    Hypotheses finish on ``end_id`` or at ``max_len``. ``beam_width=1``
    reproduces :func:`decode_greedy` exactly.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    alive: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    finished: list[tuple[tuple[int, ...], float]] = []
    for t in range(max_len):
        cond = np.array([list(seq) + [0] for seq, _ in alive], dtype=np.int64)
        ctx = [tuple(context)] * len(alive)
        logp = log_softmax(np.asarray(model.conditional_logits(cond, ctx)[:, t], dtype=np.float64))
        candidates = []
        for a, (seq, score) in enumerate(alive):
            for v in range(logp.shape[1]):
                lp = logp[a, v]
                if lp == -np.inf:
                    continue
                # secondary key keeps beam_width=1 identical to argmax under rounding
                candidates.append((-(score + lp), a, -lp, v))
        candidates.sort()
        alive_next = []
        for neg_total, a, _, v in candidates[:beam_width]:
            seq = alive[a][0]
            if v == end_id:
                finished.append((seq, -neg_total))
            else:
                alive_next.append((seq + (v,), -neg_total))
        alive = alive_next
        if not alive:
            break
    finished.extend(alive)

    def key(item):
        seq, score = item
        return score / max(len(seq), 1) if length_norm else score

    best = max(finished, key=key)
    return best[0]
