"""Synthetic page corpora with controllable color grammars, splitting and on-disk layout.

Grammars:

``tag_deterministic``
    every tag owns one text color and one background color.
``parent_conditional``
    text color follows the element's own tag, background color follows the
    parent's tag (the root uses its own), so predicting backgrounds needs
    hierarchy.
``noisy:<p>``
    ``tag_deterministic`` with each color replaced by a uniformly random RGBA
    value with probability ``p``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import page as pm
from .page import ColorStyle, Element, PageTree, RgbaColor, canonical_float

CONTAINERS = {
    "body": (["header", "main", "section", "div", "footer", "nav"], 3.0),
    "header": (["div", "nav", "a", "img", "button", "h1"], 2.0),
    "nav": (["ul", "a", "div"], 2.0),
    "ul": (["li"], 3.0),
    "li": (["a", "span", "img", "div"], 1.2),
    "main": (["section", "div", "article", "h1", "p"], 3.0),
    "section": (["div", "h2", "p", "ul", "figure", "button", "form"], 2.5),
    "article": (["h2", "p", "img", "div"], 2.5),
    "div": (["div", "span", "a", "p", "img", "button", "h3", "svg", "label"], 2.0),
    "form": (["input", "label", "button", "div"], 2.5),
    "figure": (["picture", "img", "figcaption"], 1.5),
    "picture": (["img"], 1.0),
    "footer": (["div", "p", "a", "ul", "small"], 2.5),
    "a": (["span", "img", "svg"], 0.4),
    "button": (["span", "svg"], 0.3),
    "label": (["span"], 0.2),
    "svg": (["path", "g"], 0.6),
    "g": (["path"], 1.0),
}
TEXT_PROB = {
    "a": 0.85, "p": 0.95, "span": 0.9, "button": 0.8, "h1": 1.0, "h2": 1.0, "h3": 1.0,
    "li": 0.4, "label": 0.9, "small": 1.0, "figcaption": 1.0, "div": 0.15, "input": 0.3,
}
GRAMMARS = ("tag_deterministic", "parent_conditional", "noisy")


@dataclass(frozen=True)
class CorpusConfig:
    n_pages: int = 100
    grammar: str = "tag_deterministic"
    noise: float = 0.0
    seed: int = 0
    max_depth: int = pm.MAX_DEPTH
    max_elements: int = pm.MAX_ELEMENTS
    min_size: int = 16
    max_size: int = 96

    def __post_init__(self):
        if self.grammar not in GRAMMARS:
            raise ValueError(f"unknown grammar {self.grammar!r}; expected one of {GRAMMARS}")
        if not 1 <= self.max_elements <= pm.MAX_ELEMENTS:
            raise ValueError(f"max_elements must be in 1..{pm.MAX_ELEMENTS}")
        if not 2 <= self.max_depth <= pm.MAX_DEPTH:
            raise ValueError(f"max_depth must be in 2..{pm.MAX_DEPTH}")
        if not 1 <= self.min_size <= self.max_size:
            raise ValueError("need 1 <= min_size <= max_size")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise probability must be in [0, 1]")
        if self.n_pages < 0:
            raise ValueError("n_pages must be non-negative")


def parse_grammar(spec: str) -> tuple[str, float]:
    """``"noisy:0.1"`` -> ``("noisy", 0.1)``; other names carry zero noise."""
    name, _, arg = spec.partition(":")
    if name == "noisy":
        return name, float(arg) if arg else 0.1
    if arg:
        raise ValueError(f"grammar {name!r} takes no argument")
    return name, 0.0


def _random_color(rng: np.random.Generator, opaque_prob: float) -> RgbaColor:
    r, g, b = (int(x) for x in rng.integers(0, 256, size=3))
    a = 255 if rng.random() < opaque_prob else int(rng.integers(0, 256))
    return RgbaColor(r, g, b, a)


def _design_colors(rng: np.random.Generator, n: int, opaque_prob: float) -> list[RgbaColor]:
    return [_random_color(rng, opaque_prob) for _ in range(n)]


def make_palette(seed: int, n_text: int = 6, n_bg: int = 8) -> dict[str, dict[str, RgbaColor]]:
    """Per-tag text and background colors (and parent-keyed backgrounds) for one corpus.

    Like a real site, a corpus draws its colors from a small seeded design
    palette, so several tags share a color.  Backgrounds include transparent.
    """
    rng = np.random.default_rng([seed, 7919])
    text_pal = _design_colors(rng, n_text, 0.9)
    bg_pal = [RgbaColor(0, 0, 0, 0)] + _design_colors(rng, n_bg - 1, 0.7)
    child_pal = _design_colors(rng, n_bg, 0.8)
    tags = list(pm.TAG_VOCAB) + [pm.UNK_TAG]
    text, bg, child_bg = {}, {}, {}
    for t in tags:
        text[t] = text_pal[int(rng.integers(n_text))]
        bg[t] = bg_pal[int(rng.integers(n_bg))]
        child_bg[t] = child_pal[int(rng.integers(n_bg))]
    return {"text": text, "bg": bg, "child_bg": child_bg}


# (min words, max words, P(all uppercase), P(capitalised)) by tag; headings and
# controls are short, running text is long
TEXT_SHAPE = {
    "p": (8, 60, 0.0, 0.9), "span": (1, 8, 0.05, 0.5), "a": (1, 5, 0.05, 0.6),
    "button": (1, 3, 0.4, 0.9), "h1": (2, 8, 0.2, 1.0), "h2": (2, 10, 0.1, 1.0),
    "h3": (2, 10, 0.05, 1.0), "small": (3, 15, 0.0, 0.6), "figcaption": (4, 20, 0.0, 0.9),
    "label": (1, 4, 0.1, 0.9), "li": (1, 12, 0.05, 0.7), "div": (1, 30, 0.05, 0.6),
    "input": (1, 3, 0.0, 0.5),
}


def _text_feats(rng: np.random.Generator, tag: str = "div") -> tuple[float, ...]:
    lo, hi, p_upper, p_cap = TEXT_SHAPE.get(tag, (1, 30, 0.1, 0.7))
    words = int(rng.integers(lo, hi + 1))
    lines = int(min(1 + words // 8, rng.integers(1, 5)))
    digits = rng.random() < 0.3
    bits = [
        rng.random() < p_upper,             # all uppercase
        rng.random() < p_cap,               # starts capitalised
        digits,
        digits and rng.random() < 0.3,      # all digits
        rng.random() < 0.15,                # currency symbol
        rng.random() < 0.5,                 # punctuation
        words == 1,
        words > 8,                          # longer than 50 chars
        rng.random() < 0.05,                # url
    ]
    pseudo = rng.random() < 0.05
    return (float(lines), float(words)) + tuple(float(b) for b in bits) + (float(pseudo),)


def _image_feats(rng: np.random.Generator) -> tuple[float, ...]:
    w, h = int(rng.integers(16, 400)), int(rng.integers(16, 400))
    ch = float(rng.choice([3, 4]))
    mean = rng.uniform(0, 1, size=4)
    std = rng.uniform(0, 0.4, size=4)
    svg = float(rng.random() < 0.2)
    vals = (float(w), float(h), ch, w / h) + tuple(mean) + tuple(std) + (svg,)
    return tuple(canonical_float(v) for v in vals)


def _structure(rng: np.random.Generator, budget: int, max_depth: int) -> list[tuple[int | None, int, str]]:
    """Pre-order list of (parent, order, tag) grown depth-first under a node budget."""
    nodes: list[tuple[int | None, int, str]] = [(None, 0, "html"), (0, 0, "body")]

    def grow(idx: int, tag: str, depth: int):
        if tag not in CONTAINERS or depth >= max_depth:
            return
        choices, mean_kids = CONTAINERS[tag]
        n_kids = int(rng.poisson(mean_kids * max(0.5, 1.2 - depth / 16)))
        if tag in ("body", "main", "section", "ul", "nav", "footer") and n_kids < 2:
            n_kids = 2
        for k in range(n_kids):
            if len(nodes) >= budget:
                return
            child = str(rng.choice(choices))
            nodes.append((idx, k, child))
            grow(len(nodes) - 1, child, depth + 1)

    grow(1, "body", 2)
    return nodes


def _assign_colors(structure, has_text: list[bool], cfg: CorpusConfig, palette, rng) -> list[ColorStyle]:
    styles = []
    tags = [t for _, _, t in structure]
    for i, (parent, _, tag) in enumerate(structure):
        text = palette["text"][tag] if has_text[i] else None
        if cfg.grammar == "parent_conditional":
            bg = palette["child_bg"][tags[parent] if parent is not None else tag]
        else:
            bg = palette["bg"][tag]
        if cfg.grammar == "noisy":
            if rng.random() < cfg.noise:
                bg = _random_color(rng, 0.0)
            if text is not None and rng.random() < cfg.noise:
                text = _random_color(rng, 0.0)
        styles.append(ColorStyle(background=bg, text=text))
    return styles


def generate_page(cfg: CorpusConfig, index: int, palette=None) -> PageTree:
    rng = np.random.default_rng([cfg.seed, index])
    palette = palette or make_palette(cfg.seed)
    budget = int(rng.integers(cfg.min_size, cfg.max_size + 1))
    budget = max(2, min(budget, cfg.max_elements))
    structure = _structure(rng, budget, cfg.max_depth)
    if cfg.max_elements == 1:
        structure = structure[:1]
    has_text, elements = [], []
    for parent, order, tag in structure:
        text = _text_feats(rng, tag) if rng.random() < TEXT_PROB.get(tag, 0.0) else None
        image = _image_feats(rng) if tag == "img" else None
        bg_image = _image_feats(rng) if tag in ("div", "section", "a") and rng.random() < 0.05 else None
        has_text.append(text is not None)
        elements.append(Element(parent=parent, order=order, tag=tag, text_feats=text,
                                image_feats=image, bg_image_feats=bg_image))
    styles = _assign_colors(structure, has_text, cfg, palette, rng)
    tree = PageTree(id=f"page-{index:05d}", elements=tuple(elements)).with_styles(styles)
    return pm.check(tree)


def generate_corpus(cfg: CorpusConfig) -> list[PageTree]:
    palette = make_palette(cfg.seed)
    return [generate_page(cfg, i, palette) for i in range(cfg.n_pages)]


def split(pages: Sequence[PageTree], ratios: Sequence[float], seed: int) -> tuple[list[PageTree], ...]:
    """Seeded shuffle, then contiguous partition by cumulative ratio."""
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ValueError(f"ratios {tuple(ratios)} must be non-negative and sum to 1")
    n = len(pages)
    perm = np.random.default_rng(seed).permutation(n)
    bounds = [0] + [int(round(c * n)) for c in np.cumsum(ratios)]
    bounds[-1] = n
    parts = tuple([pages[i] for i in perm[lo:hi]] for lo, hi in zip(bounds[:-1], bounds[1:]))
    if any(len(p) == 0 for p in parts):
        raise ValueError(f"split of {n} pages by {tuple(ratios)} leaves an empty part")
    return parts


def corpus_stats(pages: Sequence[PageTree]) -> dict:
    sizes = [len(p) for p in pages]
    depths = [pm.tree_depth(p) for p in pages]
    text = sum(e.has_text for p in pages for e in p.elements)
    return {
        "pages": len(pages),
        "mean_elements": float(np.mean(sizes)) if sizes else 0.0,
        "max_elements": max(sizes, default=0),
        "mean_depth": float(np.mean(depths)) if depths else 0.0,
        "max_depth": max(depths, default=0),
        "text_fraction": text / max(1, sum(sizes)),
    }


def _split_hash(pages: Sequence[PageTree]) -> str:
    h = hashlib.sha256()
    for p in sorted(pages, key=lambda p: p.id):
        h.update(pm.dumps(p).encode("utf-8"))
    return h.hexdigest()


def write_corpus(root, splits: dict[str, Sequence[PageTree]], config: dict) -> None:
    root = Path(root)
    for name, pages in splits.items():
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for p in pages:
            pm.write_page(p, d / f"{p.id}.json")
    manifest = {
        "config": config,
        "seed": config.get("seed"),
        "counts": {name: len(pages) for name, pages in splits.items()},
        "hashes": {name: _split_hash(pages) for name, pages in splits.items()},
        "stats": {name: corpus_stats(pages) for name, pages in splits.items()},
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_pages(directory) -> list[PageTree]:
    """Every ``*.json`` page in ``directory``, sorted by file name."""
    return [pm.read_page(p) for p in sorted(Path(directory).glob("*.json"))]


def read_split(root, name: str) -> list[PageTree]:
    return read_pages(Path(root) / name)


def config_dict(cfg: CorpusConfig) -> dict:
    return asdict(cfg)
