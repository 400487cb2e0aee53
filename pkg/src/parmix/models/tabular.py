"""Full-context tabular autoregressive model, small enough to enumerate."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..core import RngStream, Vocab, as_tokens

MAX_SEQUENCES = 10**6


def n_prefixes(V: int, max_len: int) -> int:
    return sum(V**t for t in range(max_len))


class TabularModel:
    """Explicit conditionals ``p(. | prefix)`` for every prefix shorter than ``max_len``.

    Prefixes are stored length-major, and within one length by base-``V``
    code with the first token most significant.
    """

    def __init__(self, vocab: Vocab, max_len: int, tables: np.ndarray):
        V = vocab.size
        if max_len < 1:
            raise ValueError("max_len must be positive")
        if V**max_len > MAX_SEQUENCES:
            raise ValueError(f"V**max_len = {V**max_len} exceeds the enumeration guard {MAX_SEQUENCES}")
        tables = np.asarray(tables, dtype=np.float64)
        expected = (n_prefixes(V, max_len), V)
        if tables.shape != expected:
            raise ValueError(f"tables must have shape {expected}, got {tables.shape}")
        if np.any(tables < 0) or np.any(np.abs(tables.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("every table row must be a probability vector (sum 1 within 1e-12)")
        self.vocab = vocab
        self.max_len = max_len
        self.tables = tables
        self.tables.setflags(write=False)
        self._offsets = np.array([n_prefixes(V, t) for t in range(max_len)], dtype=np.int64)
        self._log_tables = _safe_log(tables)

    @property
    def vocab_size(self) -> int:
        return self.vocab.size

    @classmethod
    def from_function(cls, vocab: Vocab, max_len: int, fn: Callable[[tuple[int, ...]], Sequence[float]]) -> TabularModel:
        rows = [fn(prefix) for prefix in iter_prefixes(vocab.size, max_len)]
        return cls(vocab, max_len, np.asarray(rows, dtype=np.float64))

    def prefix_index(self, prefix: Sequence[int]) -> int:
        prefix = as_tokens(prefix, self.vocab.size, allow_empty=True)
        if len(prefix) >= self.max_len:
            raise ValueError(f"prefix length {len(prefix)} must be < max_len {self.max_len}")
        code = 0
        for tok in prefix:
            code = code * self.vocab.size + tok
        return int(self._offsets[len(prefix)] + code)

    def table(self, prefix: Sequence[int]) -> np.ndarray:
        return self.tables[self.prefix_index(prefix)]

    def row_indices(self, conditioning: np.ndarray) -> np.ndarray:
        """``[B, T]`` table indices: entry ``t`` is the prefix ``conditioning[:, :t]``."""
        cond = np.asarray(conditioning, dtype=np.int64)
        B, T = cond.shape
        if T > self.max_len:
            raise ValueError(f"conditioning length {T} exceeds max_len {self.max_len}")
        if np.any(cond < 0) or np.any(cond >= self.vocab.size):
            raise ValueError("conditioning contains out-of-range token ids")
        codes = np.zeros((B, T), dtype=np.int64)
        for t in range(1, T):
            codes[:, t] = codes[:, t - 1] * self.vocab.size + cond[:, t - 1]
        return codes + self._offsets[:T][None, :]

    def conditional_probs(self, conditioning: np.ndarray) -> np.ndarray:
        return self.tables[self.row_indices(conditioning)]

    def conditional_logits(self, conditioning, contexts=None) -> np.ndarray:
        if contexts is not None and any(len(c) for c in contexts):
            raise ValueError("TabularModel is unconditional; contexts must be empty")
        return self._log_tables[self.row_indices(conditioning)]


def _safe_log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def iter_prefixes(V: int, max_len: int):
    """All prefixes of length ``0..max_len-1`` in table order."""
    for length in range(max_len):
        for code in range(V**length):
            yield tuple(int(d) for d in np.unravel_index(code, (V,) * length)) if length else ()


def tabular_random(vocab: Vocab, max_len: int, concentration: float, stream: RngStream) -> TabularModel:
    """Each conditional drawn from a symmetric Dirichlet(``concentration``)."""
    if concentration <= 0:
        raise ValueError("concentration must be positive")
    V = vocab.size
    if V**max_len > MAX_SEQUENCES:
        raise ValueError(f"V**max_len = {V**max_len} exceeds the enumeration guard {MAX_SEQUENCES}")
    gen = stream.numpy_generator()
    tables = gen.dirichlet(np.full(V, float(concentration)), size=n_prefixes(V, max_len))
    tables = tables / tables.sum(axis=1, keepdims=True)
    return TabularModel(vocab, max_len, tables)


def point_mass_chain(vocab: Vocab, max_len: int, chain: Sequence[int]) -> TabularModel:
    """Deterministic model: after any prefix of length ``t`` emit ``chain[t]``."""
    chain = as_tokens(chain, vocab.size)
    if len(chain) < max_len:
        raise ValueError("chain must cover max_len positions")

    def fn(prefix):
        row = np.zeros(vocab.size)
        row[chain[len(prefix)]] = 1.0
        return row

    return TabularModel.from_function(vocab, max_len, fn)


def uniform_tabular(vocab: Vocab, max_len: int) -> TabularModel:
    return TabularModel(vocab, max_len, np.full((n_prefixes(vocab.size, max_len), vocab.size), 1.0 / vocab.size))
