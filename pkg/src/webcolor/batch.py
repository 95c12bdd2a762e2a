"""Flattening a list of pages into one forest plus padded-batch bookkeeping."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as T
from .codec import QuantizedStyle, quantize_style, style_proportions
from .page import IMAGE_ARITY, MAX_ORDER, TEXT_ARITY, PageTree, tag_id
from .tensor import Tensor


def squash_features(x: np.ndarray) -> np.ndarray:
    """Signed log1p so raw counts and pixel sizes enter dense layers at unit scale."""
    return np.sign(x) * np.log1p(np.abs(x))


class PageBatch:
    """All elements of ``pages`` concatenated (page-major, pre-order within page).

    ``styles`` overrides the quantized styles taken from the pages, e.g. when
    upsampling generated colors.
    """

    def __init__(self, pages: Sequence[PageTree], styles: Sequence[Sequence[QuantizedStyle]] | None = None):
        self.pages = list(pages)
        sizes = np.array([len(p) for p in self.pages], dtype=np.int64)
        self.sizes = sizes
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.n_pages = len(self.pages)
        self.n_nodes = m = int(sizes.sum())
        self.max_len = int(sizes.max())

        elems = [e for p in self.pages for e in p.elements]
        self.tag = np.array([tag_id(e.tag) for e in elems], dtype=np.int64)
        self.order = np.minimum(np.array([e.order for e in elems], dtype=np.int64), MAX_ORDER)
        self.has_text = np.array([e.has_text for e in elems], dtype=bool)

        def dense(field, arity):
            out = np.zeros((m, arity))
            for i, e in enumerate(elems):
                v = getattr(e, field)
                if v is not None:
                    out[i] = v
            return squash_features(out)

        self.text = dense("text_feats", TEXT_ARITY)
        self.image = dense("image_feats", IMAGE_ARITY)
        self.bg_image = dense("bg_image_feats", IMAGE_ARITY)

        self.page_of = np.repeat(np.arange(self.n_pages), sizes)
        self.local = np.arange(m) - self.offsets[self.page_of]
        parent = np.full(m, -1, dtype=np.int64)
        depth = np.zeros(m, dtype=np.int64)
        for i, e in enumerate(elems):
            if e.parent is not None:
                parent[i] = e.parent + self.offsets[self.page_of[i]]
                depth[i] = depth[parent[i]] + 1
        self.parent = parent
        self.depth = depth
        n_children = np.bincount(parent[parent >= 0], minlength=m)
        self.is_leaf = n_children == 0

        # per-depth node lists and each node's row inside its depth level
        self.levels = [np.flatnonzero(depth == k) for k in range(int(depth.max()) + 1)]
        self.level_row = np.zeros(m, dtype=np.int64)
        for nodes in self.levels:
            self.level_row[nodes] = np.arange(len(nodes))
        self.leaves = np.flatnonzero(self.is_leaf)
        self.leaf_row = np.full(m, -1, dtype=np.int64)
        self.leaf_row[self.leaves] = np.arange(len(self.leaves))

        b, n = self.n_pages, self.max_len
        self.key_mask = np.arange(n)[None, :] < sizes[:, None]
        self.pack_index = np.full((b, n), m, dtype=np.int64)
        self.pack_index[self.key_mask] = np.arange(m)
        self.flat_index = self.page_of * n + self.local

        if styles is None and all(p.has_styles for p in self.pages):
            styles = [[quantize_style(s) for s in p.styles()] for p in self.pages]
            self.props = np.array([style_proportions(s) for p in self.pages for s in p.styles()]).reshape(m, 8)
        else:
            self.props = None
        self.has_targets = styles is not None
        if styles is not None:
            flat = [s for page_styles in styles for s in page_styles]
            if len(flat) != m:
                raise ValueError(f"{len(flat)} styles for {m} elements")
            self.text_rgb = np.array([0 if s.text is None else s.text.rgb - 1 for s in flat], dtype=np.int64)
            self.text_alpha = np.array([0 if s.text is None else s.text.alpha - 1 for s in flat], dtype=np.int64)
            self.bg_rgb = np.array([s.background.rgb - 1 for s in flat], dtype=np.int64)
            self.bg_alpha = np.array([s.background.alpha - 1 for s in flat], dtype=np.int64)
            self.style_has_text = np.array([s.text is not None for s in flat], dtype=bool)

    def pack(self, x: Tensor) -> Tensor:
        """``(M, d)`` flat rows to a zero-padded ``(B, N, d)`` tensor."""
        pad = Tensor(np.zeros((1,) + x.shape[1:]))
        return T.take(T.concat([x, pad], axis=0), self.pack_index)

    def unpack(self, y: Tensor) -> Tensor:
        b, n = self.pack_index.shape
        return T.take(T.reshape(y, (b * n,) + y.shape[2:]), self.flat_index)

    def page_weights(self, mask: np.ndarray) -> np.ndarray:
        """Weights giving each page's contributing entries equal total mass ``1/B``.

        ``mask`` has shape ``(M,)`` or ``(M, k)``; zero-count pages get zero weight.
        """
        mask = np.asarray(mask, dtype=np.float64)
        per_row = mask.reshape(self.n_nodes, -1).sum(axis=1)
        counts = np.bincount(self.page_of, weights=per_row, minlength=self.n_pages)
        scale = np.where(counts > 0, 1.0 / np.maximum(counts, 1) / self.n_pages, 0.0)
        w = scale[self.page_of]
        return mask * (w if mask.ndim == 1 else w[:, None])

    def split(self, values: np.ndarray) -> list[np.ndarray]:
        return [values[o:o + s] for o, s in zip(self.offsets, self.sizes)]
