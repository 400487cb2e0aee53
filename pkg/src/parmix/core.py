"""Shared value types and the counter-based randomness used by every module.

Randomness is a pure function of ``(seed, stream_id, counter)``: a draw never
depends on how many other draws happened elsewhere, so per-example, per-pass
and per-position sampling sites can be evaluated in any order (or all at once
as a numpy array) and still reproduce bit-for-bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

Label = Union[int, str]

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SPLIT_SALT = np.uint64(0xD1B54A32D192ED03)
_KEY_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / float(1 << 53)

PROB_TOL = 1e-9


def _u64(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return np.atleast_1d(x).astype(np.uint64, copy=False)
    if isinstance(x, (int, np.integer)):
        return np.array([int(x) & _MASK64], dtype=np.uint64)
    return np.array([int(v) & _MASK64 for v in x], dtype=np.uint64)


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _rotl(z: np.ndarray, r: int) -> np.ndarray:
    return (z << np.uint64(r)) | (z >> np.uint64(64 - r))


def label_to_int(label: Label) -> int:
    """Map a purpose label to a 64-bit integer; strings are hashed."""
    if isinstance(label, str):
        return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "little")
    if isinstance(label, (bool, float)) or not isinstance(label, (int, np.integer)):
        raise TypeError(f"stream labels must be int or str, got {type(label).__name__}")
    return int(label) & _MASK64


def _child_ids(seed, parent_ids: np.ndarray, labels: np.ndarray) -> np.ndarray:
    s = _mix64(_u64(seed) ^ _SPLIT_SALT)
    return _mix64(_mix64(parent_ids ^ s) + _mix64(labels + _GOLDEN))


def _raw_bits(seed, stream_ids: np.ndarray, counters: np.ndarray) -> np.ndarray:
    key = _mix64(_mix64(_u64(seed) + _KEY_SALT) ^ stream_ids)
    return _mix64(_mix64(counters * _GOLDEN + key) ^ _rotl(key, 23))


def _bits_to_unit(bits: np.ndarray) -> np.ndarray:
    return (bits >> np.uint64(11)).astype(np.float64) * _INV_2_53


@dataclass(frozen=True)
class RngStream:
    """A position in a counter-based random stream.

    Streams are values: drawing returns the advanced stream instead of
    mutating this one.
    """

    seed: int
    stream_id: int = 0
    counter: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id", "counter"):
            value = getattr(self, name)
            if not 0 <= int(value) <= _MASK64:
                raise ValueError(f"{name} must fit in 64 unsigned bits, got {value}")
            object.__setattr__(self, name, int(value))

    def split(self, label: Label) -> RngStream:
        return split_stream(self, label)

    def advance(self, n: int = 1) -> RngStream:
        return RngStream(self.seed, self.stream_id, (self.counter + n) & _MASK64)

    def bits(self, n: int) -> tuple[np.ndarray, RngStream]:
        counters = (np.arange(n, dtype=np.uint64) + np.uint64(self.counter))
        out = _raw_bits(self.seed, _u64(self.stream_id), counters)
        return out, self.advance(n)

    def uniforms(self, n: int) -> tuple[np.ndarray, RngStream]:
        """``n`` doubles in [0, 1) and the stream advanced by ``n``."""
        bits, nxt = self.bits(n)
        return _bits_to_unit(bits), nxt

    def uniform(self) -> tuple[float, RngStream]:
        u, nxt = self.uniforms(1)
        return float(u[0]), nxt

    def numpy_generator(self) -> np.random.Generator:
        """A numpy Generator keyed by this stream state, for recipes (e.g.
        Dirichlet/normal draws) that need more than uniforms."""
        seq = np.random.SeedSequence([self.seed, self.stream_id, self.counter])
        return np.random.Generator(np.random.Philox(seq))


def split_stream(parent: RngStream, label: Label) -> RngStream:
    """Child stream keyed by ``(parent.seed, parent.stream_id, label)``.

    The parent's counter is deliberately ignored, so the same child is
    derived no matter how far the parent has been consumed.
    """
    child = _child_ids(parent.seed, _u64(parent.stream_id), _u64(label_to_int(label)))
    return RngStream(parent.seed, int(child[0]), 0)


@dataclass(frozen=True)
class StreamArray:
    """A vector of streams sharing one seed, for vectorized sampling sites.

    ``uniforms_at(counters)`` evaluates ``ids[i]`` at ``counters[i, j]``
    without any sequential state.
    """

    seed: int
    ids: np.ndarray = field(repr=False)

    @classmethod
    def from_parent(cls, parent: RngStream, labels: Iterable[int] | np.ndarray) -> StreamArray:
        labels = _u64(np.asarray(list(labels) if not isinstance(labels, np.ndarray) else labels))
        return cls(parent.seed, _child_ids(parent.seed, _u64(parent.stream_id), labels))

    @classmethod
    def of(cls, streams: Sequence[RngStream]) -> StreamArray:
        seeds = {s.seed for s in streams}
        if len(seeds) != 1:
            raise ValueError("all streams in a StreamArray must share one seed")
        return cls(seeds.pop(), _u64([s.stream_id for s in streams]))

    def __len__(self) -> int:
        return len(self.ids)

    def split(self, label: Label) -> StreamArray:
        return StreamArray(self.seed, _child_ids(self.seed, self.ids, _u64(label_to_int(label))))

    def uniforms_at(self, counters) -> np.ndarray:
        """Uniforms of shape ``(len(self), *counters.shape)``."""
        counters = np.asarray(counters, dtype=np.uint64)
        ids = self.ids.reshape((-1,) + (1,) * counters.ndim)
        return _bits_to_unit(_raw_bits(self.seed, ids, counters[None, ...]))

    def stream(self, i: int) -> RngStream:
        return RngStream(self.seed, int(self.ids[i]), 0)


def check_probs(probs, tol: float = PROB_TOL) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim < 1 or probs.shape[-1] == 0:
        raise ValueError("probability vector must be non-empty")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise ValueError("probability vector has negative or non-finite entries")
    total = probs.sum(axis=-1)
    if np.any(np.abs(total - 1.0) > tol):
        raise ValueError(f"probability vector sums to {total}, not 1 within {tol}")
    return probs


def categorical_from_uniform(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling, vectorized over leading axes.

    Returns the smallest index whose cumulative mass exceeds ``u``; zero-mass
    entries are never selected.
    """
    cdf = np.cumsum(probs, axis=-1)
    idx = (cdf <= u[..., None]).sum(axis=-1)
    # u can exceed the last cdf entry by rounding; fall back to the last
    # index carrying positive mass
    last_pos = probs.shape[-1] - 1 - np.argmax((probs > 0)[..., ::-1], axis=-1)
    return np.minimum(idx, last_pos)


def draw_categorical(stream: RngStream, probs) -> tuple[int, RngStream]:
    """Draw one token id from ``probs``; the stream advances by exactly one."""
    probs = check_probs(probs)
    if probs.ndim != 1:
        raise ValueError("draw_categorical takes a single probability vector")
    u, nxt = stream.uniform()
    return int(categorical_from_uniform(probs, np.array(u))), nxt


@dataclass(frozen=True)
class Vocab:
    """Dense token ids ``0..size-1`` with optional reserved ids.

    Tabular oracles use the bare alphabet (no reserved ids); the neural
    harness reserves pad/bos/sep, with ``sep`` doubling as the end token.
    """

    size: int
    pad: int | None = None
    bos: int | None = None
    sep: int | None = None

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"vocab size must be >= 2, got {self.size}")
        reserved = self.reserved
        if len(set(reserved)) != len(reserved):
            raise ValueError(f"reserved ids must be distinct, got {reserved}")
        if any(not 0 <= r < self.size for r in reserved):
            raise ValueError(f"reserved ids must lie in [0, {self.size})")

    @classmethod
    def with_specials(cls, size: int) -> Vocab:
        return cls(size, pad=0, bos=1, sep=2)

    @property
    def reserved(self) -> tuple[int, ...]:
        return tuple(r for r in (self.pad, self.bos, self.sep) if r is not None)

    @property
    def content_ids(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.size) if i not in self.reserved)

    @property
    def end(self) -> int | None:
        return self.sep


TokenSeq = tuple  # tuple[int, ...]; validated by as_tokens


def as_tokens(tokens, vocab_size: int | None = None, allow_empty: bool = False) -> tuple[int, ...]:
    out = tuple(int(t) for t in tokens)
    if not out and not allow_empty:
        raise ValueError("token sequence must be non-empty")
    if vocab_size is not None and any(not 0 <= t < vocab_size for t in out):
        raise ValueError(f"token ids must lie in [0, {vocab_size}): {out}")
    return out


@dataclass(frozen=True)
class Example:
    """One input/target pair; ``input`` is empty for unconditional generation."""

    input: tuple[int, ...]
    target: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "input", as_tokens(self.input, allow_empty=True))
        object.__setattr__(self, "target", as_tokens(self.target))

    def validate(self, vocab: Vocab) -> None:
        as_tokens(self.input, vocab.size, allow_empty=True)
        as_tokens(self.target, vocab.size)
        if vocab.pad is not None and vocab.pad in self.target:
            raise ValueError("target must not contain pad tokens")


@dataclass(frozen=True)
class Batch:
    """Examples stacked for parallel inference.

    ``gold`` is target-aligned ``[B, T]`` (right-padded with ``fill``) and
    ``mask`` marks real target positions. Contexts stay ragged.
    """

    contexts: tuple[tuple[int, ...], ...]
    gold: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_examples(cls, examples: Sequence[Example], fill: int = 0) -> Batch:
        if not examples:
            raise ValueError("empty batch")
        T = max(len(e.target) for e in examples)
        gold = np.full((len(examples), T), fill, dtype=np.int64)
        mask = np.zeros((len(examples), T), dtype=bool)
        for b, e in enumerate(examples):
            gold[b, : len(e.target)] = e.target
            mask[b, : len(e.target)] = True
        return cls(tuple(e.input for e in examples), gold, mask)

    @classmethod
    def repeat(cls, example: Example, n: int) -> Batch:
        gold = np.tile(np.asarray(example.target, dtype=np.int64), (n, 1))
        return cls((example.input,) * n, gold, np.ones_like(gold, dtype=bool))

    def __len__(self) -> int:
        return self.gold.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    def with_target_end(self, end: int, fill: int = 0) -> Batch:
        """Append ``end`` after every target (used for neural training)."""
        B, T = self.gold.shape
        gold = np.full((B, T + 1), fill, dtype=np.int64)
        gold[:, :T] = self.gold
        L = self.lengths
        gold[np.arange(B), L] = end
        mask = np.arange(T + 1)[None, :] <= L[:, None]
        return Batch(self.contexts, gold, mask)
