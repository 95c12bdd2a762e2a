"""Categorical decoding rules and diverse-variation selection."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .codec import QuantizedStyle, reconstruct
from .page import ColorStyle

MID_BIN = (0.5, 0.5, 0.5, 0.5)


def softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def nucleus(probs: np.ndarray, p: float) -> np.ndarray:
    """Renormalised distribution over the smallest top-probability prefix with mass >= p.

    Ties in probability keep the lower index first.  ``p >= 1`` keeps the full
    distribution; ``p -> 0`` keeps only the argmax.
    """
    probs = np.asarray(probs, dtype=np.float64)
    probs = probs / probs.sum()
    if p >= 1.0:
        return probs
    order = np.argsort(-probs, kind="stable")
    csum = np.cumsum(probs[order])
    k = int(np.searchsorted(csum, p - 1e-12, side="left")) + 1
    keep = order[: min(k, len(order))]
    out = np.zeros_like(probs)
    out[keep] = probs[keep]
    return out / out.sum()


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    csum = np.cumsum(probs)
    u = rng.random() * csum[-1]
    return int(min(np.searchsorted(csum, u, side="right"), len(probs) - 1))


def choose(logits: np.ndarray, strategy: str, p: float, rng: np.random.Generator | None) -> int:
    """Pick a 0-based class from one row of logits."""
    if strategy == "greedy":
        return int(np.argmax(logits))
    if strategy == "top-p":
        return sample_categorical(nucleus(softmax_np(logits), p), rng)
    if strategy == "sample":
        return sample_categorical(softmax_np(logits), rng)
    raise ValueError(f"unknown decoding strategy {strategy!r}")


def _as_colors(styling: Sequence) -> list[tuple[np.ndarray | None, np.ndarray]]:
    out = []
    for s in styling:
        if isinstance(s, QuantizedStyle):
            text = None if s.text is None else np.array(reconstruct(s.text, MID_BIN), dtype=np.float64)
            bg = np.array(reconstruct(s.background, MID_BIN), dtype=np.float64)
        elif isinstance(s, ColorStyle):
            text = None if s.text is None else np.array(s.text, dtype=np.float64)
            bg = np.array(s.background, dtype=np.float64)
        else:
            raise TypeError(f"unsupported style object {type(s).__name__}")
        out.append((text, bg))
    return out


def styling_distance(a: Sequence, b: Sequence) -> float:
    """Mean Euclidean RGBA distance over corresponding (element, property) slots.

    Quantized styles are compared at their mid-bin reconstruction; text slots
    count only where both stylings have a text color.
    """
    if len(a) != len(b):
        raise ValueError(f"stylings differ in length: {len(a)} vs {len(b)}")
    dists = []
    for (ta, ba), (tb, bb) in zip(_as_colors(a), _as_colors(b)):
        dists.append(np.linalg.norm(ba - bb))
        if ta is not None and tb is not None:
            dists.append(np.linalg.norm(ta - tb))
    return float(np.mean(dists)) if dists else 0.0


def select_diverse(dist: np.ndarray, m: int, start: int) -> list[int]:
    """Greedy max-min selection over a ``K x K`` distance matrix, from ``start``."""
    dist = np.asarray(dist, dtype=np.float64)
    k = dist.shape[0]
    if not 1 <= m <= k:
        raise ValueError(f"cannot select {m} of {k} candidates")
    chosen = [start]
    nearest = dist[start].copy()
    while len(chosen) < m:
        masked = np.where(np.isin(np.arange(k), chosen), -np.inf, nearest)
        nxt = int(np.argmax(masked))
        chosen.append(nxt)
        nearest = np.minimum(nearest, dist[nxt])
    return chosen


def diverse_select(variations: Sequence[Sequence], m: int, seed: int,
                   distance: Callable[[Sequence, Sequence], float] = styling_distance) -> list[int]:
    """Indices of ``m`` mutually distant stylings; the first pick is seeded-random."""
    k = len(variations)
    if not 1 <= m <= k:
        raise ValueError(f"cannot select {m} of {k} variations")
    dist = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            dist[i, j] = dist[j, i] = distance(variations[i], variations[j])
    start = int(np.random.default_rng(seed).integers(k))
    return select_diverse(dist, m, start)
