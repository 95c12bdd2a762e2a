"""Style encoder, estimation head and the AR / NAR / CVAE generative cores."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Sequence

import numpy as np

from . import tensor as T
from .batch import PageBatch
from .codec import N_ALPHA, N_RGB, QuantizedColor, QuantizedStyle
from .decoding import choose
from .hier import ContentEncoder
from .nn import Embedding, Linear, Module, parameter
from .page import PageTree
from .tensor import Tensor, no_grad
from .transformer import Decoder, Encoder, TransformerConfig, positional_encoding

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0
KINDS = ("ar", "nar", "cvae", "upsampler")

PRESETS = {
    "full": dict(d_model=256, n_heads=8, n_layers=4, d_ffn=512),
    "toy": dict(d_model=32, n_heads=2, n_layers=2, d_ffn=64),
}


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "nar"
    d_model: int = 256
    n_heads: int = 8
    n_layers: int = 4
    d_ffn: int = 512
    message_passing: bool = True
    residual: bool = True
    kl_weight: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.d_model % 2:
            raise ValueError("d_model must be even")

    @classmethod
    def preset(cls, name: str, **overrides) -> ModelConfig:
        return cls(**{**PRESETS[name], **overrides})

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self) -> dict:
        return asdict(self)

    def transformer(self, **kw) -> TransformerConfig:
        return TransformerConfig(self.d_model, self.n_heads, self.n_layers, self.d_ffn, **kw)


class StyleLogits(NamedTuple):
    text_rgb: Tensor
    text_alpha: Tensor
    bg_rgb: Tensor
    bg_alpha: Tensor


class StyleEmbedding(Module):
    """Discrete text/background colors to one ``d``-vector per element.

    A color is ``Linear(rgb_lookup ++ alpha_lookup)``; the element vector is
    ``Linear(text_color ++ background_color)`` where elements without text use
    a learnable vector in the text slot.
    """

    def __init__(self, d: int, rng: np.random.Generator):
        self.rgb = Embedding(N_RGB, d // 2, rng)
        self.alpha = Embedding(N_ALPHA, d // 2, rng)
        self.color = Linear(d, d, rng)
        self.no_text = parameter(rng.normal(0.0, 0.02, size=d))
        self.merge = Linear(2 * d, d, rng)

    def color_vector(self, rgb: np.ndarray, alpha: np.ndarray) -> Tensor:
        return self.color(T.concat([self.rgb(rgb), self.alpha(alpha)], axis=1))

    def __call__(self, text_rgb, text_alpha, bg_rgb, bg_alpha, has_text) -> Tensor:
        """Indices are 0-based arrays of length ``M``."""
        has_text = np.asarray(has_text, dtype=bool)
        m = len(has_text)
        text = self.color_vector(text_rgb, text_alpha)
        pool = T.concat([text, T.reshape(self.no_text, (1, -1))], axis=0)
        text = T.take(pool, np.where(has_text, np.arange(m), m))
        return self.merge(T.concat([text, self.color_vector(bg_rgb, bg_alpha)], axis=1))

    def from_batch(self, batch: PageBatch) -> Tensor:
        return self(batch.text_rgb, batch.text_alpha, batch.bg_rgb, batch.bg_alpha, batch.style_has_text)


class StyleHead(Module):
    def __init__(self, d: int, rng: np.random.Generator):
        self.text_rgb = Linear(d, N_RGB, rng)
        self.text_alpha = Linear(d, N_ALPHA, rng)
        self.bg_rgb = Linear(d, N_RGB, rng)
        self.bg_alpha = Linear(d, N_ALPHA, rng)

    def __call__(self, h: Tensor) -> StyleLogits:
        return StyleLogits(self.text_rgb(h), self.text_alpha(h), self.bg_rgb(h), self.bg_alpha(h))


def mle_loss(logits: StyleLogits, batch: PageBatch) -> Tensor:
    """Cross-entropy over the four heads, text heads masked for elements without text.

    Each page averages over its contributing (element, head) terms; pages are
    then averaged.
    """
    text = batch.has_text.astype(np.float64)
    ones = np.ones(batch.n_nodes)
    w = batch.page_weights(np.stack([text, text, ones, ones], axis=1))
    targets = (batch.text_rgb, batch.text_alpha, batch.bg_rgb, batch.bg_alpha)
    terms = [T.cross_entropy(lg, tg, w[:, j]) for j, (lg, tg) in enumerate(zip(logits, targets))]
    return terms[0] + terms[1] + terms[2] + terms[3]


def kl_term(mu: Tensor, logvar: Tensor, batch: PageBatch) -> Tensor:
    """Gaussian KL to N(0, I), averaged over latent entries per page, then over pages."""
    return T.gaussian_kl(mu, logvar, batch.page_weights(np.ones(mu.shape)))


def cvae_loss(logits: StyleLogits, batch: PageBatch, mu: Tensor, logvar: Tensor, kl_weight: float = 0.1) -> Tensor:
    return mle_loss(logits, batch) + kl_weight * kl_term(mu, logvar, batch)


def decode_styles(logits: StyleLogits, batch: PageBatch, strategy: str = "greedy", p: float = 0.9,
                  rng: np.random.Generator | None = None) -> list[list[QuantizedStyle]]:
    """Per-element styles from head logits; text is left empty where the page has no text."""
    arrays = [lg.data for lg in logits]
    out = []
    for i in range(batch.n_nodes):
        tr, ta, br, ba = (choose(a[i], strategy, p, rng) + 1 for a in arrays)
        text = QuantizedColor(tr, ta) if batch.has_text[i] else None
        out.append(QuantizedStyle(background=QuantizedColor(br, ba), text=text))
    return [out[o:o + s] for o, s in zip(batch.offsets, batch.sizes)]


class CoreModel(Module):
    kind = ""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = seed

    def loss(self, batch: PageBatch, rng: np.random.Generator) -> Tensor:
        raise NotImplementedError

    def generate(self, pages: Sequence[PageTree], seed: int = 0, **kw) -> list[list[QuantizedStyle]]:
        raise NotImplementedError


class NARModel(CoreModel):
    """Content encoder, Transformer encoder, head: all elements in one pass."""

    kind = "nar"

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__(config, seed)
        rng = np.random.default_rng(seed)
        d = config.d_model
        self.content = ContentEncoder(d, rng, config.message_passing, config.residual)
        self.encoder = Encoder(config.transformer(), rng)
        self.head = StyleHead(d, rng)

    def forward(self, batch: PageBatch) -> StyleLogits:
        h = self.content(batch)
        y = self.encoder(batch.pack(h), batch.key_mask)
        return self.head(batch.unpack(y))

    def loss(self, batch, rng=None):
        return mle_loss(self.forward(batch), batch)

    def generate(self, pages, seed=0, strategy="greedy", p=0.9, **kw):
        batch = PageBatch(pages)
        with no_grad():
            return decode_styles(self.forward(batch), batch, strategy, p, np.random.default_rng(seed))


class ARModel(CoreModel):
    """Encoder over content; causal decoder over previous styles in pre-order.

    Decoder input at step ``n`` is the style embedding of element ``n-1`` (a
    learnable start vector at ``n = 0``) plus the content embedding of element
    ``n`` plus its positional encoding.
    """

    kind = "ar"

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__(config, seed)
        rng = np.random.default_rng(seed)
        d = config.d_model
        self.content = ContentEncoder(d, rng, config.message_passing, config.residual)
        self.encoder = Encoder(config.transformer(), rng)
        self.style = StyleEmbedding(d, rng)
        self.start = parameter(rng.normal(0.0, 0.02, size=d))
        self.decoder = Decoder(config.transformer(causal=True, cross_attention=True), rng)
        self.head = StyleHead(d, rng)

    def _decode(self, batch: PageBatch, h: Tensor, memory: Tensor, style_emb: Tensor) -> StyleLogits:
        m = batch.n_nodes
        prev = np.where(batch.local == 0, m, np.arange(m) - 1)
        shifted = T.take(T.concat([style_emb, T.reshape(self.start, (1, -1))], axis=0), prev)
        x = batch.pack(shifted + h) + Tensor(positional_encoding(batch.max_len, self.config.d_model))
        y = self.decoder(x, memory, batch.key_mask, batch.key_mask)
        return self.head(batch.unpack(y))

    def forward(self, batch: PageBatch) -> StyleLogits:
        """Teacher-forced logits for every element."""
        h = self.content(batch)
        memory = self.encoder(batch.pack(h), batch.key_mask)
        return self._decode(batch, h, memory, self.style.from_batch(batch))

    def loss(self, batch, rng=None):
        return mle_loss(self.forward(batch), batch)

    def generate(self, pages, seed=0, strategy="greedy", p=0.9, **kw):
        batch = PageBatch(pages, styles=[[QuantizedStyle(QuantizedColor(1, 1))] * len(pg) for pg in pages])
        rng = np.random.default_rng(seed)
        m = batch.n_nodes
        chosen = np.zeros((m, 4), dtype=np.int64)
        with no_grad():
            h = self.content(batch)
            memory = self.encoder(batch.pack(h), batch.key_mask)
            for t in range(batch.max_len):
                emb = self.style(chosen[:, 0], chosen[:, 1], chosen[:, 2], chosen[:, 3], batch.has_text)
                logits = self._decode(batch, h, memory, emb)
                for i in np.flatnonzero(batch.local == t):
                    chosen[i] = [choose(lg.data[i], strategy, p, rng) for lg in logits]
        out = []
        for i in range(m):
            text = QuantizedColor(chosen[i, 0] + 1, chosen[i, 1] + 1) if batch.has_text[i] else None
            out.append(QuantizedStyle(QuantizedColor(chosen[i, 2] + 1, chosen[i, 3] + 1), text))
        return [out[o:o + s] for o, s in zip(batch.offsets, batch.sizes)]


class CVAEModel(CoreModel):
    """Posterior encoder over content + style; decoder over latent + content.

    The decoder is a self-attention stack over per-element inputs
    ``Wz z + Wc h_C + PE``; at generation time ``z ~ N(0, I)``.
    """

    kind = "cvae"

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__(config, seed)
        rng = np.random.default_rng(seed)
        d = config.d_model
        self.content = ContentEncoder(d, rng, config.message_passing, config.residual)
        self.style = StyleEmbedding(d, rng)
        self.posterior = Encoder(config.transformer(), rng)
        self.mu = Linear(d, d, rng)
        self.logvar = Linear(d, d, rng)
        self.z_proj = Linear(d, d, rng)
        self.c_proj = Linear(d, d, rng)
        self.decoder = Encoder(config.transformer(), rng)
        self.head = StyleHead(d, rng)

    def encode(self, batch: PageBatch, h: Tensor) -> tuple[Tensor, Tensor]:
        post = self.posterior(batch.pack(h + self.style.from_batch(batch)), batch.key_mask)
        post = batch.unpack(post)
        return self.mu(post), T.clip(self.logvar(post), LOGVAR_MIN, LOGVAR_MAX)

    def decode(self, batch: PageBatch, h: Tensor, z: Tensor) -> StyleLogits:
        x = batch.pack(self.z_proj(z) + self.c_proj(h))
        x = x + Tensor(positional_encoding(batch.max_len, self.config.d_model))
        return self.head(batch.unpack(self.decoder(x, batch.key_mask)))

    def forward_train(self, batch: PageBatch, rng: np.random.Generator | None = None, sample: bool = True,
                      noise: np.ndarray | None = None) -> tuple[StyleLogits, Tensor, Tensor]:
        """Logits from a reparametrised posterior draw, plus ``(mu, logvar)``.

        ``sample=False`` uses ``z = mu``; ``noise`` fixes the standard-normal draw.
        """
        h = self.content(batch)
        mu, logvar = self.encode(batch, h)
        if noise is None:
            noise = rng.standard_normal(mu.shape) if sample else np.zeros(mu.shape)
        z = T.reparam_sample(mu, logvar, noise)
        return self.decode(batch, h, z), mu, logvar

    def loss(self, batch, rng):
        logits, mu, logvar = self.forward_train(batch, rng)
        nll, kl = mle_loss(logits, batch), kl_term(mu, logvar, batch)
        self.last_terms = (nll.item(), kl.item())
        return nll + self.config.kl_weight * kl

    def generate(self, pages, seed=0, **kw):
        batch = PageBatch(pages, styles=[[QuantizedStyle(QuantizedColor(1, 1))] * len(pg) for pg in pages])
        rng = np.random.default_rng(seed)
        with no_grad():
            h = self.content(batch)
            z = Tensor(rng.standard_normal((batch.n_nodes, self.config.d_model)))
            return decode_styles(self.decode(batch, h, z), batch)
