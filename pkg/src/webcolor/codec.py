"""8-bins-per-channel RGBA quantization and within-bin reconstruction.

RGB bins are packed r-major into a 1-based index ``1 + 64*kr + 8*kg + kb``;
alpha gets its own 1-based index ``1 + ka``.  A channel value ``c`` sits in bin
``c // 32`` at proportion ``(c - lo) / 31``, which is exactly invertible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .page import ColorStyle, RgbaColor

N_BINS = 8
BIN_WIDTH = 32
N_RGB = N_BINS ** 3
N_ALPHA = N_BINS


class QuantizedColor(NamedTuple):
    rgb: int
    alpha: int


@dataclass(frozen=True)
class QuantizedStyle:
    background: QuantizedColor
    text: QuantizedColor | None = None


class ProportionWarning(UserWarning):
    pass


def bin_bounds(k: int) -> tuple[int, int]:
    if not 0 <= k < N_BINS:
        raise ValueError(f"bin {k} outside 0..{N_BINS - 1}")
    lo = BIN_WIDTH * k
    return lo, lo + BIN_WIDTH - 1


def quantize(color: Sequence[int]) -> QuantizedColor:
    r, g, b, a = (int(c) // BIN_WIDTH for c in color)
    return QuantizedColor(1 + 64 * r + 8 * g + b, 1 + a)


def channel_bins(q: QuantizedColor) -> tuple[int, int, int, int]:
    if not (1 <= q.rgb <= N_RGB and 1 <= q.alpha <= N_ALPHA):
        raise ValueError(f"quantized color out of range: {q}")
    k = q.rgb - 1
    return k // 64, (k // 8) % 8, k % 8, q.alpha - 1


def gt_proportions(color: Sequence[int]) -> tuple[float, float, float, float]:
    return tuple((int(c) - BIN_WIDTH * (int(c) // BIN_WIDTH)) / (BIN_WIDTH - 1) for c in color)


def reconstruct(q: QuantizedColor, props: Sequence[float]) -> RgbaColor:
    """Full-resolution color inside the bins of ``q``; proportions are clamped to [0, 1]."""
    props = [float(p) for p in props]
    if any(not 0.0 <= p <= 1.0 for p in props):
        warnings.warn(f"proportions {props} clamped to [0, 1]", ProportionWarning, stacklevel=2)
        props = [min(1.0, max(0.0, p)) for p in props]
    # round half up keeps the mapping monotone and inside [lo, lo + 31]
    return RgbaColor(*(BIN_WIDTH * k + int(np.floor(p * (BIN_WIDTH - 1) + 0.5))
                       for k, p in zip(channel_bins(q), props)))


def quantize_style(style: ColorStyle) -> QuantizedStyle:
    return QuantizedStyle(
        background=quantize(style.background),
        text=None if style.text is None else quantize(style.text),
    )


def style_proportions(style: ColorStyle) -> tuple[float, ...]:
    """Eight proportions: text r,g,b,a then background r,g,b,a (text zeros when absent)."""
    text = gt_proportions(style.text) if style.text is not None else (0.0, 0.0, 0.0, 0.0)
    return tuple(text) + tuple(gt_proportions(style.background))


def reconstruct_style(q: QuantizedStyle, props: Sequence[float]) -> ColorStyle:
    return ColorStyle(
        background=reconstruct(q.background, props[4:8]),
        text=None if q.text is None else reconstruct(q.text, props[0:4]),
    )


def quantize_array(rgb: np.ndarray) -> np.ndarray:
    """Vectorised 0-based RGB bin index for an ``(..., 3)`` uint8-like array."""
    k = np.asarray(rgb, dtype=np.int64) // BIN_WIDTH
    return 64 * k[..., 0] + 8 * k[..., 1] + k[..., 2]
