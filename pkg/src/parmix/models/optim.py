from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8
LEARNING_RATE = 1e-3
CLIP_NORM = 1.0


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))


def apply_update(model, grads: dict[str, np.ndarray], state: AdamState | None = None,
                 lr: float = LEARNING_RATE, clip_norm: float | None = CLIP_NORM):
    """One Adam step on ``model.params`` in place; returns ``(model, state)``.

    The global gradient norm is clipped to ``clip_norm`` first. Non-finite
    gradients raise before anything is modified.
    """
    state = state if state is not None else AdamState()
    bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradientError(f"non-finite gradients in {bad}; update skipped")
    missing = set(model.params) - set(grads)
    if missing:
        raise ValueError(f"gradients missing for {sorted(missing)}")
    scale = 1.0
    if clip_norm is not None:
        norm = global_norm(grads)
        if norm > clip_norm:
            scale = clip_norm / norm
    state.step += 1
    t = state.step
    bc1 = 1.0 - BETA1**t
    bc2 = 1.0 - BETA2**t
    for name, param in model.params.items():
        g = grads[name] * scale if scale != 1.0 else grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param)
            v = np.zeros_like(param)
        m = BETA1 * m + (1.0 - BETA1) * g
        v = BETA2 * v + (1.0 - BETA2) * (g * g)
        state.m[name], state.v[name] = m.astype(param.dtype), v.astype(param.dtype)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + EPS)
        param -= update.astype(param.dtype)
    return model, state
