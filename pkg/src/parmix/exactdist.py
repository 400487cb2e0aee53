"""Exact sequence distributions of a tabular model by enumeration.

Sequences of length ``T`` over ``V`` tokens are indexed by their base-``V``
code, first token most significant, so ``probs.reshape((V,) * T)`` puts
position ``t`` on axis ``t``. All arithmetic is 64-bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import RngStream, Vocab, as_tokens, draw_categorical
from .models.tabular import MAX_SEQUENCES, TabularModel, tabular_random

SUM_TOL = 1e-10
EXACT_TOL = 1e-10
MAX_TRANSITION_WORK = 10**8
_CHUNK_CELLS = 1 << 22


@dataclass(frozen=True)
class SeqDistribution:
    V: int
    T: int
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (self.V**self.T,):
            raise ValueError(f"expected {self.V**self.T} entries, got shape {probs.shape}")
        if np.any(probs < 0):
            raise ValueError("distribution has negative entries")
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"distribution sums to {probs.sum()!r}")
        object.__setattr__(self, "probs", probs)

    def __getitem__(self, seq: Sequence[int]) -> float:
        return float(self.probs[encode(seq, self.V)])

    def prefix_marginal(self, m: int) -> np.ndarray:
        """Marginal over positions ``1..m`` (flat, base-``V`` coded)."""
        if not 0 <= m <= self.T:
            raise ValueError("prefix length out of range")
        return self.probs.reshape(self.V ** m, -1).sum(axis=1)

    def argmax(self) -> tuple[int, ...]:
        return decode(int(np.argmax(self.probs)), self.V, self.T)

    @classmethod
    def point_mass(cls, seq: Sequence[int], V: int) -> SeqDistribution:
        probs = np.zeros(V ** len(seq))
        probs[encode(seq, V)] = 1.0
        return cls(V, len(seq), probs)


def encode(seq: Sequence[int], V: int) -> int:
    code = 0
    for tok in seq:
        code = code * V + int(tok)
    return code


def decode(code: int, V: int, T: int) -> tuple[int, ...]:
    return tuple(int(d) for d in np.unravel_index(code, (V,) * T)) if T else ()


def all_sequences(V: int, T: int) -> np.ndarray:
    """``[V**T, T]`` array of every sequence, row ``i`` coding to ``i``."""
    return np.stack(np.unravel_index(np.arange(V**T), (V,) * T), axis=1).astype(np.int64)


def _check_feasible(model: TabularModel, T: int, work: int | None = None) -> None:
    V = model.vocab.size
    if T > model.max_len:
        raise ValueError(f"T={T} exceeds the model's max_len {model.max_len}")
    if V**T > MAX_SEQUENCES:
        raise ValueError(f"V**T = {V**T} exceeds the enumeration guard {MAX_SEQUENCES}")
    if work is not None and work > MAX_TRANSITION_WORK:
        raise ValueError(f"transition work V**(2T) = {work} exceeds the guard {MAX_TRANSITION_WORK}")


def _picked_conditionals(model: TabularModel, seqs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cond = model.conditional_probs(seqs)
    picked = np.take_along_axis(cond, seqs[..., None], axis=-1)[..., 0]
    return cond, picked


def ancestral(model: TabularModel, T: int) -> SeqDistribution:
    """Law of sample decoding: product of stored conditionals along each sequence."""
    _check_feasible(model, T)
    seqs = all_sequences(model.vocab.size, T)
    _, picked = _picked_conditionals(model, seqs)
    return SeqDistribution(model.vocab.size, T, picked.prod(axis=1))


def sequential_proposal(model: TabularModel, gold: Sequence[int], p: float) -> SeqDistribution:
    """Law of the sequentially mixed conditioning sequence:
    ``prod_t [(1-p) 1[z_t = y_t] + p p(z_t | z_<t)]``."""
    V = model.vocab.size
    gold = np.asarray(as_tokens(gold, V))
    T = len(gold)
    _check_feasible(model, T)
    seqs = all_sequences(V, T)
    _, picked = _picked_conditionals(model, seqs)
    factors = (1.0 - p) * (seqs == gold[None, :]) + p * picked
    return SeqDistribution(V, T, factors.prod(axis=1))


def parallel_proposal_passes(model: TabularModel, gold: Sequence[int], p: float, K: int) -> list[SeqDistribution]:
    """Pass-by-pass laws ``[q^1, ..., q^K]`` of parallel scheduled sampling.

    Each pass is one step of a Markov chain over the ``V**T`` sequences,
    started from the gold sequence. The step from ``s`` factorizes over
    positions: a point mass on ``s_t`` for frozen positions ``t < k``, and
    ``(1-p) 1[z_t = y_t] + p p(z_t | s_<t)`` elsewhere. Source states are
    streamed in chunks so the full kernel is never materialized.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    V = model.vocab.size
    gold = np.asarray(as_tokens(gold, V))
    T = len(gold)
    n = V**T
    _check_feasible(model, T, work=n * n)
    seqs = all_sequences(V, T)
    cond, _ = _picked_conditionals(model, seqs)
    gold_onehot = np.eye(V)[gold]
    mixed_factor = (1.0 - p) * gold_onehot[None] + p * cond
    onehot = np.eye(V)[seqs]

    dist = np.zeros(n)
    dist[encode(gold, V)] = 1.0
    chunk = max(1, _CHUNK_CELLS // n)
    out = []
    for k in range(1, K + 1):
        frozen = np.arange(T) < k - 1
        new = np.zeros(n)
        support = np.flatnonzero(dist)
        for start in range(0, len(support), chunk):
            src = support[start : start + chunk]
            F = np.where(frozen[None, :, None], onehot[src], mixed_factor[src])
            kernel = F[:, 0, :]
            for t in range(1, T):
                kernel = (kernel[:, :, None] * F[:, t, None, :]).reshape(len(src), -1)
            new += dist[src] @ kernel
        dist = new
        out.append(SeqDistribution(V, T, dist.copy()))
    return out


def parallel_proposal(model: TabularModel, gold: Sequence[int], p: float, K: int) -> SeqDistribution:
    return parallel_proposal_passes(model, gold, p, K)[-1]


def _check_pair(a: SeqDistribution, b: SeqDistribution) -> None:
    if (a.V, a.T) != (b.V, b.T):
        raise ValueError(f"distributions differ in shape: (V={a.V}, T={a.T}) vs (V={b.V}, T={b.T})")


def tv_distance(a: SeqDistribution, b: SeqDistribution) -> float:
    _check_pair(a, b)
    return float(0.5 * np.abs(a.probs - b.probs).sum())


def kl_divergence(a: SeqDistribution, b: SeqDistribution) -> float:
    """``KL(a || b)``; raises if ``a`` puts mass where ``b`` has none."""
    _check_pair(a, b)
    support = a.probs > 0
    if np.any(b.probs[support] == 0):
        raise ValueError("KL undefined: a has mass outside the support of b")
    pa, pb = a.probs[support], b.probs[support]
    return float(max(np.sum(pa * (np.log(pa) - np.log(pb))), 0.0))


# ---------------------------------------------------------------- theorem check


def theorem_instance(V: int, T: int, seed: int, concentration: float = 1.0) -> tuple[TabularModel, tuple[int, ...]]:
    """A seeded tabular model and a gold sequence drawn once from its ancestral law."""
    root = RngStream(seed)
    model = tabular_random(Vocab(V), T, concentration, root.split("tables"))
    code, _ = draw_categorical(root.split("gold"), ancestral(model, T).probs)
    return model, decode(code, V, T)


@dataclass(frozen=True)
class PassCheck:
    K: int
    tv: float
    prefix_tv: float

    @property
    def prefix_ok(self) -> bool:
        return self.prefix_tv <= EXACT_TOL


@dataclass(frozen=True)
class TheoremReport:
    V: int
    T: int
    gold: tuple[int, ...]
    rows: tuple[PassCheck, ...]
    tol: float = EXACT_TOL

    @property
    def passed(self) -> bool:
        return all(r.tv <= self.tol for r in self.rows if r.K >= self.T) and all(r.prefix_ok for r in self.rows)

    def format(self) -> str:
        lines = [f"V={self.V} T={self.T} gold={list(self.gold)}"]
        for r in self.rows:
            tag = "K>=T" if r.K >= self.T else "K<T "
            lines.append(f"  K={r.K:<2d} {tag} tv={r.tv:.3e} prefix_tv={r.prefix_tv:.3e}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def verify_theorem(model: TabularModel, gold: Sequence[int], T: int | None = None) -> TheoremReport:
    """At ``p = 1``: TV to the ancestral law for ``K = 1..T+2`` and the
    prefix invariant (the first ``min(K, T)`` positions already match)."""
    gold = as_tokens(gold, model.vocab.size)
    T = len(gold) if T is None else T
    if len(gold) != T:
        raise ValueError("gold length must equal T")
    target = ancestral(model, T)
    passes = parallel_proposal_passes(model, gold, 1.0, T + 2)
    rows = []
    for K, q in enumerate(passes, start=1):
        m = min(K, T)
        prefix_tv = 0.5 * float(np.abs(q.prefix_marginal(m) - target.prefix_marginal(m)).sum())
        rows.append(PassCheck(K, tv_distance(q, target), prefix_tv))
    return TheoremReport(model.vocab.size, T, gold, tuple(rows))


# ---------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepRow:
    p: float
    K: int
    tv: float
    kl: float


def proposal_sweep(model: TabularModel, gold: Sequence[int], p_grid: Iterable[float],
                   K_grid: Iterable[int]) -> list[SweepRow]:
    """TV and ``KL(q^K || ancestral)`` of the parallel proposal on a grid."""
    gold = as_tokens(gold, model.vocab.size)
    K_grid = sorted(set(int(k) for k in K_grid))
    target = ancestral(model, len(gold))
    rows = []
    for p in p_grid:
        passes = parallel_proposal_passes(model, gold, float(p), K_grid[-1])
        for K in K_grid:
            q = passes[K - 1]
            try:
                kl = kl_divergence(q, target)
            except ValueError:
                kl = math.inf
            rows.append(SweepRow(float(p), K, tv_distance(q, target), kl))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p", "K", "tv", "kl"])
        for r in rows:
            writer.writerow([f"{r.p:.17g}", r.K, f"{r.tv:.17g}", f"{r.kl:.17g}"])
    return path


def read_sweep_csv(path) -> list[SweepRow]:
    with Path(path).open(newline="") as fh:
        return [SweepRow(float(r["p"]), int(r["K"]), float(r["tv"]), float(r["kl"])) for r in csv.DictReader(fh)]
