"""Content embedding and bottom-up / top-down tree message passing.

For element ``n`` with set-pooled content embedding ``hbar[n]``:

* leaf:      ``up[n] = MLP_up(hbar[n] ++ h_leaf)``
* internal:  ``up[n] = max_c MLP_up(hbar[n] ++ up[c])`` over children ``c``
* root:      ``down[n] = MLP_down(up[n] ++ h_root)``
* otherwise: ``down[n] = MLP_down(up[n] ++ down[parent(n)])``

and the contextualised embedding is ``hbar + down``.  Both passes run one
tree level at a time across every page of a batch.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .batch import PageBatch
from .nn import MLP, Embedding, Linear, Module, parameter
from .page import IMAGE_ARITY, MAX_ORDER, TAG_VOCAB, TEXT_ARITY
from .tensor import Tensor


def _broadcast_row(vec: Tensor, n: int) -> Tensor:
    return T.take(T.reshape(vec, (1, vec.shape[0])), np.zeros(n, dtype=np.int64))


class ContentEmbedding(Module):
    def __init__(self, d: int, rng: np.random.Generator):
        self.order = Embedding(MAX_ORDER + 1, d, rng, scale=math.sqrt(d))
        self.tag = Embedding(len(TAG_VOCAB) + 1, d, rng, scale=math.sqrt(d))
        self.text = Linear(TEXT_ARITY, d, rng)
        self.image = Linear(IMAGE_ARITY, d, rng)
        self.bg_image = Linear(IMAGE_ARITY, d, rng)

    def __call__(self, batch: PageBatch) -> Tensor:
        members = [
            self.order(batch.order),
            self.tag(batch.tag),
            self.text(Tensor(batch.text)),
            self.image(Tensor(batch.image)),
            self.bg_image(Tensor(batch.bg_image)),
        ]
        return T.maxpool_over_set(T.stack(members, axis=1), axis=1)


class ContentEncoder(Module):
    """Produces the contextualised content embedding of every element in a batch.

    ``message_passing=False`` returns the pooled embedding unchanged;
    ``residual=False`` returns the top-down state alone.
    """

    def __init__(self, d: int, rng: np.random.Generator, message_passing: bool = True, residual: bool = True):
        self.d = d
        self.embed = ContentEmbedding(d, rng)
        self.mlp_up = MLP(2 * d, d, d, rng)
        self.mlp_down = MLP(2 * d, d, d, rng)
        self.h_leaf = parameter(rng.normal(0.0, 0.02, size=d))
        self.h_root = parameter(rng.normal(0.0, 0.02, size=d))
        self.message_passing = message_passing
        self.residual = residual

    def __call__(self, batch: PageBatch) -> Tensor:
        hbar = self.embed(batch)
        if not self.message_passing:
            return hbar
        down = self.message_pass(batch, hbar)[1]
        return hbar + down if self.residual else down

    def message_pass(self, batch: PageBatch, hbar: Tensor) -> tuple[Tensor, Tensor]:
        """Return ``(up, down)`` as ``(M, d)`` tensors in batch node order."""
        leaves = batch.leaves
        leaf_up = self.mlp_up(T.concat([T.take(hbar, leaves), _broadcast_row(self.h_leaf, len(leaves))], axis=1))

        n_levels = len(batch.levels)
        up_levels: list[Tensor | None] = [None] * n_levels
        for k in range(n_levels - 1, -1, -1):
            nodes = batch.levels[k]
            is_leaf = batch.is_leaf[nodes]
            parts, order = [], []
            if is_leaf.any():
                parts.append(T.take(leaf_up, batch.leaf_row[nodes[is_leaf]]))
                order.append(np.flatnonzero(is_leaf))
            if (~is_leaf).any():
                internal = nodes[~is_leaf]
                kids = batch.levels[k + 1]
                child_up = up_levels[k + 1]
                own = T.take(hbar, batch.parent[kids])
                msgs = self.mlp_up(T.concat([own, child_up], axis=1))
                # every node one level down has its parent among this level's internal nodes
                rank = np.full(batch.n_nodes, -1, dtype=np.int64)
                rank[internal] = np.arange(len(internal))
                parts.append(T.segment_max(msgs, rank[batch.parent[kids]], len(internal)))
                order.append(np.flatnonzero(~is_leaf))
            level = parts[0] if len(parts) == 1 else T.concat(parts, axis=0)
            perm = np.argsort(np.concatenate(order), kind="stable")
            up_levels[k] = T.take(level, perm) if len(parts) > 1 else level

        down_levels: list[Tensor] = []
        for k in range(n_levels):
            nodes = batch.levels[k]
            if k == 0:
                ctx = _broadcast_row(self.h_root, len(nodes))
            else:
                ctx = T.take(down_levels[k - 1], batch.level_row[batch.parent[nodes]])
            down_levels.append(self.mlp_down(T.concat([up_levels[k], ctx], axis=1)))

        inv = np.argsort(np.concatenate(batch.levels), kind="stable")
        up = T.take(T.concat(up_levels, axis=0), inv)
        down = T.take(T.concat(down_levels, axis=0), inv)
        return up, down
