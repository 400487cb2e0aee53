"""A small pre-norm causal self-attention decoder in numpy, with hand-written backprop.

Conditional generation is decoder-only: the model reads
``[context..., sep, conditioning...]`` and row ``t`` of the conditional logits
is read off at the position holding ``conditioning[t-1]`` (``sep`` for t=0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import RngStream, Vocab

_GELU_C = math.sqrt(2.0 / math.pi)
LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelDims:
    d_model: int = 32
    n_heads: int = 2
    d_ff: int = 64
    n_layers: int = 2
    max_positions: int = 128

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        for name in ("d_model", "n_heads", "d_ff", "n_layers", "max_positions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def param_shapes(vocab_size: int, dims: ModelDims) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes, in checkpoint order."""
    d, f = dims.d_model, dims.d_ff
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (vocab_size, d),
        "pos_emb": (dims.max_positions, d),
    }
    for i in range(dims.n_layers):
        p = f"layer{i}."
        shapes.update({
            p + "ln1.g": (d,), p + "ln1.b": (d,),
            p + "attn.wq": (d, d), p + "attn.wk": (d, d), p + "attn.wv": (d, d),
            p + "attn.wo": (d, d), p + "attn.bo": (d,),
            p + "ln2.g": (d,), p + "ln2.b": (d,),
            p + "ff.w1": (d, f), p + "ff.b1": (f,),
            p + "ff.w2": (f, d), p + "ff.b2": (d,),
        })
    shapes.update({"ln_f.g": (d,), "ln_f.b": (d,), "out.w": (d, vocab_size), "out.b": (vocab_size,)})
    return shapes


def _ln_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _ln_backward(dy, g, cache):
    xhat, rstd = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                 - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _gelu(u):
    t = np.tanh(_GELU_C * (u + 0.044715 * (u * u * u)))
    return 0.5 * u * (1.0 + t), t


def _gelu_backward(du_out, u, t):
    dt = _GELU_C * (1.0 + 3 * 0.044715 * u * u)
    return du_out * (0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * dt)


class MiniNeuralModel:
    """Token + learned position embeddings, ``n_layers`` pre-norm blocks,
    final layer norm and an untied output projection."""

    def __init__(self, vocab: Vocab, dims: ModelDims, params: dict[str, np.ndarray]):
        if vocab.sep is None:
            raise ValueError("the neural model needs a vocab with a sep token")
        shapes = param_shapes(vocab.size, dims)
        if list(params) != list(shapes):
            missing = set(shapes) ^ set(params)
            raise ValueError(f"parameter names do not match the architecture: {sorted(missing) or 'order differs'}")
        for name, shape in shapes.items():
            if params[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {params[name].shape}")
        self.vocab = vocab
        self.dims = dims
        self.params = params

    @classmethod
    def init(cls, vocab: Vocab, dims: ModelDims = ModelDims(), stream: RngStream | None = None,
             dtype=np.float32) -> MiniNeuralModel:
        gen = (stream or RngStream(0)).numpy_generator()
        resid_scale = 0.02 / math.sqrt(2 * dims.n_layers)
        params = {}
        for name, shape in param_shapes(vocab.size, dims).items():
            leaf = name.rsplit(".", 1)[-1]
            if leaf == "g":
                value = np.ones(shape)
            elif leaf.startswith("b") and len(shape) == 1:
                value = np.zeros(shape)
            elif leaf in ("wo", "w2"):
                value = gen.normal(0.0, resid_scale, shape)
            else:
                value = gen.normal(0.0, 0.02, shape)
            params[name] = value.astype(dtype)
        return cls(vocab, dims, params)

    @property
    def vocab_size(self) -> int:
        return self.vocab.size

    @property
    def dtype(self):
        return self.params["tok_emb"].dtype

    def astype(self, dtype) -> MiniNeuralModel:
        return MiniNeuralModel(self.vocab, self.dims, {k: v.astype(dtype) for k, v in self.params.items()})

    def copy(self) -> MiniNeuralModel:
        return self.astype(self.dtype)

    # ------------------------------------------------------------------ packing

    def pack(self, conditioning: np.ndarray, contexts: Sequence | None = None):
        """Build packed inputs; returns ``(tokens [B, N], rows [B, T])``."""
        cond = np.asarray(conditioning, dtype=np.int64)
        B, T = cond.shape
        if contexts is None:
            contexts = ((),) * B
        if len(contexts) != B:
            raise ValueError("one context per conditioning row is required")
        V = self.vocab.size
        if np.any(cond < 0) or np.any(cond >= V):
            raise ValueError("conditioning contains out-of-range token ids")
        ctx_len = np.array([len(c) for c in contexts], dtype=np.int64)
        N = int(ctx_len.max()) + T
        if N > self.dims.max_positions:
            raise ValueError(f"packed length {N} exceeds max_positions {self.dims.max_positions}")
        pad = self.vocab.pad if self.vocab.pad is not None else 0
        tokens = np.full((B, N), pad, dtype=np.int64)
        for b, ctx in enumerate(contexts):
            if len(ctx):
                tokens[b, : len(ctx)] = ctx
        if np.any(tokens >= V) or np.any(tokens < 0):
            raise ValueError("context contains out-of-range token ids")
        ar = np.arange(B)[:, None]
        rows = ctx_len[:, None] + np.arange(T)[None, :]
        tokens[ar[:, 0], ctx_len] = self.vocab.sep
        if T > 1:
            tokens[ar, rows[:, :-1] + 1] = cond[:, :-1]
        return tokens, rows

    # ------------------------------------------------------------------ forward / backward

    def forward(self, tokens: np.ndarray, keep: bool = False):
        """Logits ``[B, N, V]`` for packed ``tokens``; with ``keep`` also the backprop cache."""
        P = self.params
        dims = self.dims
        B, N = tokens.shape
        H = dims.n_heads
        dh = dims.d_model // H
        scale = 1.0 / math.sqrt(dh)
        causal = np.tril(np.ones((N, N), dtype=bool))
        neg_inf = np.array(-np.inf, dtype=self.dtype)
        h = P["tok_emb"][tokens] + P["pos_emb"][:N][None]
        caches = []
        for i in range(dims.n_layers):
            p = f"layer{i}."
            a_in, ln1 = _ln_forward(h, P[p + "ln1.g"], P[p + "ln1.b"])
            q = (a_in @ P[p + "attn.wq"]).reshape(B, N, H, dh).transpose(0, 2, 1, 3)
            k = (a_in @ P[p + "attn.wk"]).reshape(B, N, H, dh).transpose(0, 2, 1, 3)
            v = (a_in @ P[p + "attn.wv"]).reshape(B, N, H, dh).transpose(0, 2, 1, 3)
            s = (q @ k.transpose(0, 1, 3, 2)) * scale
            s = np.where(causal, s, neg_inf)
            s = s - s.max(axis=-1, keepdims=True)
            e = np.exp(s)
            A = e / e.sum(axis=-1, keepdims=True)
            o = (A @ v).transpose(0, 2, 1, 3).reshape(B, N, dims.d_model)
            h = h + o @ P[p + "attn.wo"] + P[p + "attn.bo"]
            f_in, ln2 = _ln_forward(h, P[p + "ln2.g"], P[p + "ln2.b"])
            u = f_in @ P[p + "ff.w1"] + P[p + "ff.b1"]
            g, t = _gelu(u)
            h = h + g @ P[p + "ff.w2"] + P[p + "ff.b2"]
            if keep:
                caches.append((a_in, ln1, q, k, v, A, o, f_in, ln2, u, g, t))
        hf, lnf = _ln_forward(h, P["ln_f.g"], P["ln_f.b"])
        logits = hf @ P["out.w"] + P["out.b"]
        if keep:
            return logits, (tokens, caches, hf, lnf)
        return logits

    def backward(self, cache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        P = self.params
        dims = self.dims
        tokens, caches, hf, lnf = cache
        B, N = tokens.shape
        H = dims.n_heads
        d = dims.d_model
        dh = d // H
        scale = 1.0 / math.sqrt(dh)
        grads: dict[str, np.ndarray] = {}

        def flat(x):
            return x.reshape(-1, x.shape[-1])

        grads["out.w"] = flat(hf).T @ flat(dlogits)
        grads["out.b"] = flat(dlogits).sum(axis=0)
        dh_ = dlogits @ P["out.w"].T
        dh_, grads["ln_f.g"], grads["ln_f.b"] = _ln_backward(dh_, P["ln_f.g"], lnf)
        for i in reversed(range(dims.n_layers)):
            p = f"layer{i}."
            a_in, ln1, q, k, v, A, o, f_in, ln2, u, g, t = caches[i]
            # feed-forward branch
            grads[p + "ff.w2"] = flat(g).T @ flat(dh_)
            grads[p + "ff.b2"] = flat(dh_).sum(axis=0)
            du = _gelu_backward(dh_ @ P[p + "ff.w2"].T, u, t)
            grads[p + "ff.w1"] = flat(f_in).T @ flat(du)
            grads[p + "ff.b1"] = flat(du).sum(axis=0)
            df_in = du @ P[p + "ff.w1"].T
            dx, grads[p + "ln2.g"], grads[p + "ln2.b"] = _ln_backward(df_in, P[p + "ln2.g"], ln2)
            dh_ = dh_ + dx
            # attention branch
            grads[p + "attn.wo"] = flat(o).T @ flat(dh_)
            grads[p + "attn.bo"] = flat(dh_).sum(axis=0)
            do = (dh_ @ P[p + "attn.wo"].T).reshape(B, N, H, dh).transpose(0, 2, 1, 3)
            dA = do @ v.transpose(0, 1, 3, 2)
            dv = A.transpose(0, 1, 3, 2) @ do
            ds = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) * scale
            dq = ds @ k
            dk = ds.transpose(0, 1, 3, 2) @ q

            def merge(x):
                return x.transpose(0, 2, 1, 3).reshape(B, N, d)

            dq, dk, dv = merge(dq), merge(dk), merge(dv)
            grads[p + "attn.wq"] = flat(a_in).T @ flat(dq)
            grads[p + "attn.wk"] = flat(a_in).T @ flat(dk)
            grads[p + "attn.wv"] = flat(a_in).T @ flat(dv)
            da_in = dq @ P[p + "attn.wq"].T + dk @ P[p + "attn.wk"].T + dv @ P[p + "attn.wv"].T
            dx, grads[p + "ln1.g"], grads[p + "ln1.b"] = _ln_backward(da_in, P[p + "ln1.g"], ln1)
            dh_ = dh_ + dx
        grads["pos_emb"] = np.zeros_like(P["pos_emb"])
        grads["pos_emb"][:N] = dh_.sum(axis=0)
        grads["tok_emb"] = np.zeros_like(P["tok_emb"])
        np.add.at(grads["tok_emb"], tokens.reshape(-1), flat(dh_))
        return {name: grads[name].astype(self.dtype, copy=False) for name in P}

    # ------------------------------------------------------------------ model interface

    def conditional_logits(self, conditioning, contexts=None) -> np.ndarray:
        tokens, rows = self.pack(conditioning, contexts)
        logits = self.forward(tokens)
        return logits[np.arange(tokens.shape[0])[:, None], rows]

    def packed_loss_and_grads(self, tokens: np.ndarray, targets: np.ndarray, mask: np.ndarray):
        """Mean next-token NLL over ``mask`` positions of a packed batch."""
        mask = np.asarray(mask, dtype=bool)
        count = int(mask.sum())
        if count == 0:
            raise ValueError("loss mask selects no positions")
        logits, cache = self.forward(tokens, keep=True)
        m = logits.max(axis=-1, keepdims=True)
        shifted = logits - m
        e = np.exp(shifted)
        z = e.sum(axis=-1, keepdims=True)
        logp = shifted - np.log(z)
        safe_targets = np.where(mask, targets, 0)
        picked = np.take_along_axis(logp, safe_targets[..., None], axis=-1)[..., 0]
        loss = -float(picked[mask].sum(dtype=np.float64) / count)
        dlogits = e / z
        np.put_along_axis(dlogits, safe_targets[..., None],
                          np.take_along_axis(dlogits, safe_targets[..., None], axis=-1) - 1, axis=-1)
        dlogits *= (mask[..., None] / count).astype(self.dtype)
        grads = self.backward(cache, dlogits.astype(self.dtype, copy=False))
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise FloatingPointError("non-finite loss or gradient")
        return loss, grads

    def loss_and_grads(self, conditioning, targets, mask, contexts=None):
        """Mean NLL of ``targets`` given ``conditioning`` prefixes, over ``mask``.

        All three arrays are target-aligned ``[B, T]``; the conditioning may
        differ from the targets (scheduled sampling), the loss always scores
        ``targets``.
        """
        cond = np.atleast_2d(np.asarray(conditioning, dtype=np.int64))
        tgt = np.atleast_2d(np.asarray(targets, dtype=np.int64))
        mask = np.atleast_2d(np.asarray(mask, dtype=bool))
        if cond.shape != tgt.shape or cond.shape != mask.shape:
            raise ValueError("conditioning, targets and mask must share one shape")
        if contexts is not None and np.asarray(conditioning).ndim == 1:
            contexts = [tuple(contexts)]
        tokens, rows = self.pack(cond, contexts)
        packed_targets = np.zeros_like(tokens)
        packed_mask = np.zeros(tokens.shape, dtype=bool)
        ar = np.arange(tokens.shape[0])[:, None]
        packed_targets[ar, rows] = tgt
        packed_mask[ar, rows] = mask
        return self.packed_loss_and_grads(tokens, packed_targets, packed_mask)
