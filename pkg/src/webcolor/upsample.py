"""Color upsampler: within-bin proportion regression and full-resolution reconstruction."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as T
from .batch import PageBatch
from .codec import QuantizedStyle, reconstruct_style
from .hier import ContentEncoder
from .models import CoreModel, ModelConfig, StyleEmbedding
from .nn import Linear
from .page import ColorStyle, PageTree
from .tensor import Tensor, no_grad
from .transformer import Encoder


class Upsampler(CoreModel):
    """Predicts 8 proportions per element: text r,g,b,a then background r,g,b,a."""

    kind = "upsampler"

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__(config, seed)
        rng = np.random.default_rng(seed)
        d = config.d_model
        self.content = ContentEncoder(d, rng, config.message_passing, config.residual)
        self.style = StyleEmbedding(d, rng)
        self.encoder = Encoder(config.transformer(), rng)
        self.out = Linear(d, 8, rng)

    def forward(self, batch: PageBatch) -> Tensor:
        x = self.content(batch) + self.style.from_batch(batch)
        y = batch.unpack(self.encoder(batch.pack(x), batch.key_mask))
        return T.sigmoid(self.out(y))

    def loss(self, batch, rng=None):
        return upsample_loss(self.forward(batch), batch.props, batch)

    def predict(self, pages: Sequence[PageTree], styles: Sequence[Sequence[QuantizedStyle]]) -> list[np.ndarray]:
        batch = PageBatch(pages, styles)
        with no_grad():
            return batch.split(self.forward(batch).data)

    def apply(self, pages: Sequence[PageTree], styles: Sequence[Sequence[QuantizedStyle]]) -> list[list[ColorStyle]]:
        return [apply_proportions(q, props) for q, props in zip(styles, self.predict(pages, styles))]


def upsample_loss(pred: Tensor, target: np.ndarray, batch: PageBatch) -> Tensor:
    """Squared error on contributing proportions, averaged per page then over pages.

    Text entries count only for elements with text.
    """
    text = batch.has_text.astype(np.float64)[:, None]
    mask = np.concatenate([np.repeat(text, 4, axis=1), np.ones((batch.n_nodes, 4))], axis=1)
    return T.mse(pred, target, batch.page_weights(mask))


def apply_proportions(styles: Sequence[QuantizedStyle], props: np.ndarray) -> list[ColorStyle]:
    return [reconstruct_style(q, row) for q, row in zip(styles, props)]
