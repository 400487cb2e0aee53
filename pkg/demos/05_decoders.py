"""Greedy, sampling and beam search on a model whose greedy path is a trap.

The first token is 0 with probability 0.6, but after a 0 the next token is a
coin flip, while after a 1 it is certain. Greedy commits to 0 and ends with
probability 0.3; a beam of two keeps the 1 alive and finds the 0.4 sequence.
"""

from __future__ import annotations

import math

import numpy as np

from parmix.core import RngStream, StreamArray, Vocab
from parmix.decoding import decode_beam, decode_greedy, decode_sample_batch, sequence_logprob
from parmix.models.tabular import TabularModel

model = TabularModel(Vocab(2), 2, np.array([[0.6, 0.4], [0.5, 0.5], [1.0, 0.0]]))

for name, seq in [("greedy", decode_greedy(model, max_len=2)),
                  ("beam-2", decode_beam(model, beam_width=2, max_len=2))]:
    print(f"{name:7s} {seq}  p = {math.exp(sequence_logprob(model, seq)):.2f}")

draws = decode_sample_batch(model, [()] * 10_000, 2, StreamArray.from_parent(RngStream(0), range(10_000)))
counts = {seq: draws.count(seq) for seq in sorted(set(draws))}
print("sampled frequencies:", {k: v / 10_000 for k, v in counts.items()})
