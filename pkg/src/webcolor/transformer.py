"""Pre-layer-norm Transformer encoder/decoder stacks over padded batches.

Inputs are ``(B, N, d)`` tensors (a 2-D ``(N, d)`` input is treated as one
page).  ``key_mask`` is a boolean ``(B, N)`` array marking real tokens.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .nn import LayerNorm, Linear, Module
from .tensor import ShapeError, Tensor

NEG_INF = -1e30


@dataclass(frozen=True)
class TransformerConfig:
    d_model: int = 256
    n_heads: int = 8
    n_layers: int = 4
    d_ffn: int = 512
    dropout: float = 0.0
    causal: bool = False
    cross_attention: bool = False

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.dropout != 0.0:
            raise ValueError("dropout is not supported; use 0")

    def to_dict(self) -> dict:
        return asdict(self)


def positional_encoding(n: int, d: int) -> np.ndarray:
    """Sinusoidal table: even columns ``sin(pos / 10000^(2i/d))``, odd columns ``cos``."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(0, d, 2, dtype=np.float64)
    freq = np.exp(-math.log(10000.0) * i / d)
    table = np.zeros((n, d))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq[: d // 2])
    return table


def attention_mask(key_mask: np.ndarray, n_queries: int, causal: bool) -> np.ndarray:
    """Additive ``(B, 1, M, N)`` mask: 0 where attention is allowed, -1e30 elsewhere."""
    key_mask = np.asarray(key_mask, dtype=bool)
    allowed = np.broadcast_to(key_mask[:, None, None, :], (key_mask.shape[0], 1, n_queries, key_mask.shape[1]))
    if causal:
        tri = np.tril(np.ones((n_queries, key_mask.shape[1]), dtype=bool))
        allowed = allowed & tri[None, None]
    return np.where(allowed, 0.0, NEG_INF)


class MultiHeadAttention(Module):
    def __init__(self, d: int, n_heads: int, rng: np.random.Generator):
        self.n_heads = n_heads
        self.q = Linear(d, d, rng)
        self.k = Linear(d, d, rng)
        self.v = Linear(d, d, rng)
        self.o = Linear(d, d, rng)
        self.last_weights: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        b, n, d = x.shape
        return T.transpose(T.reshape(x, (b, n, self.n_heads, d // self.n_heads)), (0, 2, 1, 3))

    def __call__(self, xq: Tensor, xkv: Tensor, mask: np.ndarray) -> Tensor:
        b, m, d = xq.shape
        q, k, v = self._split(self.q(xq)), self._split(self.k(xkv)), self._split(self.v(xkv))
        scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(d // self.n_heads))
        full_mask = np.broadcast_to(mask, scores.shape)
        weights = T.softmax(scores + Tensor(np.ascontiguousarray(full_mask)), axis=-1)
        self.last_weights = weights.data
        ctx = T.reshape(T.transpose(T.matmul(weights, v), (0, 2, 1, 3)), (b, m, d))
        return self.o(ctx)


class FeedForward(Module):
    def __init__(self, d: int, d_ffn: int, rng: np.random.Generator):
        self.fc1 = Linear(d, d_ffn, rng)
        self.fc2 = Linear(d_ffn, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(x)))


class EncoderLayer(Module):
    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        self.ln1 = LayerNorm(cfg.d_model)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng)
        self.ln2 = LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ffn, rng)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, mask)
        return x + self.ffn(self.ln2(x))


class DecoderLayer(Module):
    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        self.ln1 = LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng)
        self.ln2 = LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng)
        self.ln3 = LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ffn, rng)

    def __call__(self, x: Tensor, memory: Tensor, self_mask: np.ndarray, cross_mask: np.ndarray) -> Tensor:
        h = self.ln1(x)
        x = x + self.self_attn(h, h, self_mask)
        x = x + self.cross_attn(self.ln2(x), memory, cross_mask)
        return x + self.ffn(self.ln3(x))


def _as_batch(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 2:
        return T.reshape(x, (1,) + x.shape), True
    if x.ndim != 3:
        raise ShapeError(f"transformer: expected (N, d) or (B, N, d), got {x.shape}")
    return x, False


class Encoder(Module):
    """Stack of pre-LN self-attention blocks followed by a final layer norm."""

    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.layers = [EncoderLayer(cfg, rng) for _ in range(cfg.n_layers)]
        self.ln_final = LayerNorm(cfg.d_model)

    def __call__(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        x, squeeze = _as_batch(x)
        if x.shape[-1] != self.cfg.d_model:
            raise ShapeError(f"encoder: input dim {x.shape[-1]} != d_model {self.cfg.d_model}")
        b, n, _ = x.shape
        key_mask = np.ones((b, n), dtype=bool) if key_mask is None else key_mask
        mask = attention_mask(key_mask, n, self.cfg.causal)
        for layer in self.layers:
            x = layer(x, mask)
        x = self.ln_final(x)
        return T.reshape(x, x.shape[1:]) if squeeze else x


class Decoder(Module):
    """Pre-LN blocks with causal self-attention and cross-attention to ``memory``."""

    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.layers = [DecoderLayer(cfg, rng) for _ in range(cfg.n_layers)]
        self.ln_final = LayerNorm(cfg.d_model)

    def __call__(self, x: Tensor, memory: Tensor | None, target_mask: np.ndarray | None = None,
                 memory_mask: np.ndarray | None = None) -> Tensor:
        if memory is None:
            raise ValueError("decoder: cross-attention requires memory")
        x, squeeze = _as_batch(x)
        memory, _ = _as_batch(memory)
        if x.shape[-1] != self.cfg.d_model or memory.shape[-1] != self.cfg.d_model:
            raise ShapeError(f"decoder: dims {x.shape[-1]}/{memory.shape[-1]} != d_model {self.cfg.d_model}")
        if memory.shape[0] != x.shape[0]:
            raise ShapeError(f"decoder: batch {x.shape[0]} vs memory batch {memory.shape[0]}")
        b, m, _ = x.shape
        target_mask = np.ones((b, m), dtype=bool) if target_mask is None else target_mask
        memory_mask = np.ones(memory.shape[:2], dtype=bool) if memory_mask is None else memory_mask
        self_mask = attention_mask(target_mask, m, causal=True)
        cross_mask = attention_mask(memory_mask, m, causal=False)
        for layer in self.layers:
            x = layer(x, memory, self_mask, cross_mask)
        x = self.ln_final(x)
        return T.reshape(x, x.shape[1:]) if squeeze else x
