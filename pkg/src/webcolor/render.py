"""Box-model preview renderer.

A coarse, deterministic stand-in for a browser screenshot: the root fills a
360x640 canvas and every element's children stack vertically inside it, 4 px
in from each edge, with heights proportional to subtree size.  Backgrounds are
painted in pre-order with source-over compositing; text is a centered bar.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .codec import BIN_WIDTH, N_RGB
from .page import ColorStyle, PageTree

WIDTH, HEIGHT = 360, 640
PADDING = 4
MIN_HEIGHT = 8
TEXT_BAR = 8
PNG_LEVEL = 9


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int


def subtree_sizes(tree: PageTree) -> list[int]:
    sizes = [1] * len(tree)
    # pre-order: every child sits after its parent
    for i in range(len(tree) - 1, 0, -1):
        sizes[tree.elements[i].parent] += sizes[i]
    return sizes


def split_heights(total: int, weights: Sequence[int], minimum: int = MIN_HEIGHT) -> list[int]:
    """Integer band heights proportional to ``weights`` (cumulative floor), at least ``minimum`` each."""
    cum = np.cumsum(weights)
    bounds = [0] + [int(total * c // cum[-1]) for c in cum]
    return [max(minimum, b - a) for a, b in zip(bounds[:-1], bounds[1:])]


def layout(tree: PageTree, width: int = WIDTH, height: int = HEIGHT) -> list[Rect]:
    sizes = subtree_sizes(tree)
    kids = tree.children()
    rects = [Rect(0, 0, 0, 0)] * len(tree)
    rects[0] = Rect(0, 0, width, height)
    for i in range(len(tree)):
        if not kids[i]:
            continue
        r = rects[i]
        x, y = r.x + PADDING, r.y + PADDING
        w, h = r.w - 2 * PADDING, max(0, r.h - 2 * PADDING)
        for c, hc in zip(kids[i], split_heights(h, [sizes[c] for c in kids[i]])):
            rects[c] = Rect(x, y, w, hc)
            y += hc
    return rects


def composite(src: np.ndarray, dst: np.ndarray, alpha: float) -> np.ndarray:
    """Source-over on 8-bit channels, ``alpha`` in [0, 1], rounded half up."""
    out = np.floor(alpha * np.asarray(src, dtype=np.float64) + (1.0 - alpha) * np.asarray(dst, dtype=np.float64) + 0.5)
    return out.astype(np.uint8)


def _paint(buf: np.ndarray, rect: Rect, color) -> None:
    x0, y0 = max(rect.x, 0), max(rect.y, 0)
    x1, y1 = min(rect.x + rect.w, buf.shape[1]), min(rect.y + rect.h, buf.shape[0])
    if x1 <= x0 or y1 <= y0:
        return
    a = color[3]
    if a == 0:
        return
    region = buf[y0:y1, x0:x1]
    if a == 255:
        region[...] = color[:3]
    else:
        region[...] = composite(np.array(color[:3]), region, a / 255.0)


def rasterize(tree: PageTree, styles: Sequence[ColorStyle] | None = None,
              rects: Sequence[Rect] | None = None) -> np.ndarray:
    """``(HEIGHT, WIDTH, 3)`` uint8 buffer over an opaque white base."""
    styles = tree.styles() if styles is None else styles
    rects = layout(tree) if rects is None else rects
    buf = np.full((rects[0].h, rects[0].w, 3), 255, dtype=np.uint8)
    for rect, style in zip(rects, styles):
        _paint(buf, rect, style.background)
        if style.text is not None:
            bar = min(TEXT_BAR, rect.h)
            _paint(buf, Rect(rect.x, rect.y + (rect.h - bar) // 2, rect.w, bar), style.text)
    return buf


def pixel_histogram(buf: np.ndarray) -> np.ndarray:
    """512-bin quantized RGB histogram normalized by pixel count (0-based bins)."""
    k = np.asarray(buf, dtype=np.int64).reshape(-1, 3) // BIN_WIDTH
    idx = 64 * k[:, 0] + 8 * k[:, 1] + k[:, 2]
    return np.bincount(idx, minlength=N_RGB).astype(np.float64) / len(idx)


def _chunk(kind: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", zlib.crc32(kind + data) & 0xFFFFFFFF)


def encode_png(buf: np.ndarray) -> bytes:
    """8-bit RGB PNG, filter type 0 on every row, fixed zlib level."""
    buf = np.ascontiguousarray(buf, dtype=np.uint8)
    if buf.ndim != 3 or buf.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) buffer, got {buf.shape}")
    h, w, _ = buf.shape
    raw = np.concatenate([np.zeros((h, 1), dtype=np.uint8), buf.reshape(h, w * 3)], axis=1).tobytes()
    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + _chunk(b"IHDR", header)
            + _chunk(b"IDAT", zlib.compress(raw, PNG_LEVEL)) + _chunk(b"IEND", b""))


def write_png(path, buf: np.ndarray) -> None:
    Path(path).write_bytes(encode_png(buf))


def render_page(tree: PageTree, styles: Sequence[ColorStyle] | None = None) -> np.ndarray:
    return rasterize(tree, styles, layout(tree))
