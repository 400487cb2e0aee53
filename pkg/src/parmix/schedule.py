"""Mixing-probability schedules: teacher-forcing warm-up, then a ramp to ``p_max``."""

from __future__ import annotations

import math
from dataclasses import dataclass

SHAPES = ("exp", "linear", "sigmoid", "constant")


@dataclass(frozen=True)
class MixingConfig:
    p_max: float = 0.5
    passes: int = 1
    warmup_steps: int = 0
    total_steps: int = 1
    shape: str = "exp"
    fixed_coins: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p_max <= 1.0:
            raise ValueError(f"p_max must lie in [0, 1], got {self.p_max}")
        if self.passes < 1:
            raise ValueError(f"passes must be >= 1, got {self.passes}")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be non-negative")
        if self.total_steps <= self.warmup_steps:
            raise ValueError(
                f"total_steps ({self.total_steps}) must exceed warmup_steps ({self.warmup_steps})"
            )
        if self.shape not in SHAPES:
            raise ValueError(f"unknown schedule shape {self.shape!r}; expected one of {SHAPES}")


def _logistic(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def mixing_prob(config: MixingConfig, step: int) -> float:
    """Probability of conditioning on a model sample at training ``step``.

    Zero during warm-up, nondecreasing afterwards, held constant past
    ``total_steps``. ``exp`` reaches 0.99 of ``p_max`` at ``total_steps``;
    ``linear`` and ``sigmoid`` reach it exactly.
    """
    W, S, p_max = config.warmup_steps, config.total_steps, config.p_max
    if step < W:
        return 0.0
    if config.shape == "constant":
        return p_max
    elapsed = min(step, S) - W
    span = S - W
    if config.shape == "linear":
        return p_max * (elapsed / span)
    if config.shape == "exp":
        # 0.01 ** (elapsed / span) equals alpha ** elapsed with alpha = 0.01 ** (1 / span),
        # but hits 0.01 exactly at the final step instead of drifting above it
        return p_max * (1.0 - 0.01 ** (elapsed / span))
    u = elapsed / span
    lo, hi = _logistic(-6.0), _logistic(6.0)
    value = p_max * (_logistic(12.0 * u - 6.0) - lo) / (hi - lo)
    return min(max(value, 0.0), p_max)
