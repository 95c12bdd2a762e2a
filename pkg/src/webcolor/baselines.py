"""Statistics colorizers: per-(tag, property) color frequencies with a global fallback.

``colorize_mode`` takes the most frequent quantized color; ``colorize_sampling``
draws one color per distinct (tag, property) pair on a page, proportional to
counts, and reuses it for every matching element.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .codec import QuantizedColor, QuantizedStyle, quantize_style
from .page import PageTree

PROPERTIES = ("text", "background")


class EmptyTableError(ValueError):
    pass


def _norm_tag(tag: str) -> str:
    # keyed by the raw tag so tags outside the model vocabulary still get their own row
    return tag.lower()


@dataclass
class FrequencyTable:
    """Counts of quantized colors keyed by ``(tag, property)``, plus per-property totals."""

    counts: dict[tuple[str, str], Counter] = field(default_factory=dict)

    def add(self, tag: str, prop: str, color: QuantizedColor, n: int = 1) -> None:
        if prop not in PROPERTIES:
            raise ValueError(f"unknown property {prop!r}")
        self.counts.setdefault((tag, prop), Counter())[QuantizedColor(*color)] += n

    def global_counts(self, prop: str) -> Counter:
        total: Counter = Counter()
        for (_, p), c in self.counts.items():
            if p == prop:
                total.update(c)
        return total

    def lookup(self, tag: str, prop: str) -> Counter:
        """Counts for the pair, or the global table when the pair was never seen."""
        c = self.counts.get((_norm_tag(tag), prop))
        if c:
            return c
        g = self.global_counts(prop)
        if not g:
            raise EmptyTableError(f"no {prop} colors in the table")
        return g

    def to_json(self) -> str:
        out: dict[str, dict[str, list]] = {}
        for (tag, prop), c in self.counts.items():
            rows = sorted([q.rgb, q.alpha, n] for q, n in c.items())
            out.setdefault(tag, {})[prop] = rows
        return json.dumps(out, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FrequencyTable":
        table = cls()
        for tag, props in json.loads(text).items():
            for prop, rows in props.items():
                for rgb, alpha, n in rows:
                    if n < 0:
                        raise ValueError(f"negative count for ({tag}, {prop})")
                    table.add(tag, prop, QuantizedColor(int(rgb), int(alpha)), int(n))
        return table

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FrequencyTable":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def fit(pages: Iterable[PageTree]) -> FrequencyTable:
    table = FrequencyTable()
    for page in pages:
        if not page.has_styles:
            raise ValueError(f"page {page.id!r} has no ground-truth styles")
        for e in page.elements:
            q = quantize_style(e.style)
            tag = _norm_tag(e.tag)
            table.add(tag, "background", q.background)
            if q.text is not None:
                table.add(tag, "text", q.text)
    return table


def mode_color(counts: Counter) -> QuantizedColor:
    """Most frequent color; ties go to the smallest ``(rgb, alpha)``."""
    best = max(counts.values())
    return min(q for q, n in counts.items() if n == best)


def colorize_mode(table: FrequencyTable, page: PageTree) -> list[QuantizedStyle]:
    out = []
    for e in page.elements:
        text = mode_color(table.lookup(e.tag, "text")) if e.has_text else None
        out.append(QuantizedStyle(background=mode_color(table.lookup(e.tag, "background")), text=text))
    return out


def sample_color(counts: Counter, rng: np.random.Generator) -> QuantizedColor:
    colors = sorted(counts)
    weights = np.array([counts[q] for q in colors], dtype=np.float64)
    return colors[int(rng.choice(len(colors), p=weights / weights.sum()))]


def colorize_sampling(table: FrequencyTable, page: PageTree, seed: int) -> list[QuantizedStyle]:
    rng = np.random.default_rng(seed)
    drawn: dict[tuple[str, str], QuantizedColor] = {}

    def pick(tag: str, prop: str) -> QuantizedColor:
        key = (_norm_tag(tag), prop)
        if key not in drawn:
            drawn[key] = sample_color(table.lookup(tag, prop), rng)
        return drawn[key]

    out = []
    for e in page.elements:
        text = pick(e.tag, "text") if e.has_text else None
        out.append(QuantizedStyle(background=pick(e.tag, "background"), text=text))
    return out


def colorize(table: FrequencyTable, pages: Sequence[PageTree], method: str = "mode",
             seed: int = 0) -> list[list[QuantizedStyle]]:
    if method == "mode":
        return [colorize_mode(table, p) for p in pages]
    if method == "sampling":
        return [colorize_sampling(table, p, seed + i) for i, p in enumerate(pages)]
    raise ValueError(f"unknown baseline method {method!r}")
