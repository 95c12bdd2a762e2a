"""Ordered-tree page representation, validation and canonical JSON I/O."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence

MAX_ELEMENTS = 200
MAX_DEPTH = 30
MAX_ORDER = 63
TEXT_ARITY = 12
IMAGE_ARITY = 13

TAG_VOCAB: tuple[str, ...] = (
    "html", "body", "div", "span", "a", "img", "p", "button", "ul", "li",
    "h1", "h2", "h3", "h4", "h5", "h6", "header", "footer", "nav", "section",
    "input", "form", "svg", "picture", "figure", "table", "main", "article",
    "aside", "label", "select", "option", "textarea", "strong", "em", "b",
    "i", "small", "ol", "dl", "dt", "dd", "tr", "td", "th", "tbody",
    "thead", "iframe", "video", "source", "path", "g", "figcaption", "time",
    "blockquote", "pre", "code", "hr", "br", "fieldset", "legend", "sup",
    "sub", "del",
)
UNK_TAG = "UNK"
TAG_INDEX = {t: i for i, t in enumerate(TAG_VOCAB)}

TEXT_INDICATORS = (
    "all_uppercase", "starts_capitalized", "contains_digit", "all_digits",
    "contains_currency", "contains_punctuation", "single_word", "longer_than_50",
    "contains_url",
)


def tag_id(tag: str) -> int:
    """Index into ``TAG_VOCAB``; unknown tags map to ``len(TAG_VOCAB)`` (UNK)."""
    return TAG_INDEX.get(tag.lower(), len(TAG_VOCAB))


class RgbaColor(NamedTuple):
    r: int
    g: int
    b: int
    a: int


@dataclass(frozen=True)
class ColorStyle:
    background: RgbaColor
    text: RgbaColor | None = None


@dataclass(frozen=True)
class Element:
    parent: int | None
    order: int
    tag: str
    text_feats: tuple[float, ...] | None = None
    image_feats: tuple[float, ...] | None = None
    bg_image_feats: tuple[float, ...] | None = None
    style: ColorStyle | None = None

    @property
    def has_text(self) -> bool:
        return self.text_feats is not None


@dataclass(frozen=True)
class PageTree:
    id: str
    elements: tuple[Element, ...]

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def has_styles(self) -> bool:
        return all(e.style is not None for e in self.elements)

    def styles(self) -> list[ColorStyle]:
        missing = [i for i, e in enumerate(self.elements) if e.style is None]
        if missing:
            raise PageValidationError([Violation(missing[0], "style", f"page {self.id!r} lacks styles")])
        return [e.style for e in self.elements]

    def with_styles(self, styles: Sequence[ColorStyle | None]) -> PageTree:
        if len(styles) != len(self.elements):
            raise ValueError(f"{len(styles)} styles for {len(self.elements)} elements")
        return replace(self, elements=tuple(replace(e, style=s) for e, s in zip(self.elements, styles)))

    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in self.elements]
        for i, e in enumerate(self.elements):
            if e.parent is not None and 0 <= e.parent < len(self.elements):
                kids[e.parent].append(i)
        for k in kids:
            k.sort(key=lambda c: self.elements[c].order)
        return kids


class Violation(NamedTuple):
    index: int
    rule: str
    message: str


class PageValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(f"element {v.index}: [{v.rule}] {v.message}" for v in violations))


class PageFormatError(ValueError):
    pass


# ---------------------------------------------------------------- validation

def validate(tree: PageTree) -> list[Violation]:
    """Return every broken invariant; an empty list means the tree is valid."""
    out: list[Violation] = []
    n = len(tree.elements)
    if n < 1:
        return [Violation(-1, "size", "page has no elements")]
    if n > MAX_ELEMENTS:
        out.append(Violation(n - 1, "size", f"{n} elements exceeds limit {MAX_ELEMENTS}"))
    roots = [i for i, e in enumerate(tree.elements) if e.parent is None]
    if roots != [0]:
        out.append(Violation(roots[1] if len(roots) > 1 and roots[0] == 0 else (roots[0] if roots else 0),
                             "root", f"expected a single root at index 0, found roots {roots}"))
    # pre-order: the parent must lie on the path from the root to the previous element
    path: list[int] = []
    depth = [0] * n
    structural_ok = True
    for i, e in enumerate(tree.elements):
        if e.parent is None:
            path = [i]
            depth[i] = 1
            continue
        if not 0 <= e.parent < i:
            out.append(Violation(i, "preorder", f"parent index {e.parent} is not before element {i}"))
            structural_ok = False
            continue
        while path and path[-1] != e.parent:
            path.pop()
        if not path:
            out.append(Violation(i, "preorder", f"parent {e.parent} is not an open ancestor in pre-order"))
            structural_ok = False
            path = [i]
            continue
        path.append(i)
        depth[i] = depth[e.parent] + 1
    if structural_ok and max(depth) > MAX_DEPTH:
        deepest = max(range(n), key=lambda k: depth[k])
        out.append(Violation(deepest, "depth", f"tree depth {depth[deepest]} exceeds limit {MAX_DEPTH}"))
    if structural_ok:
        for kids in tree.children():
            for pos, c in enumerate(sorted(kids)):
                if tree.elements[c].order != pos:
                    out.append(Violation(c, "order", f"sibling order {tree.elements[c].order}, expected {pos}"))
    for i, e in enumerate(tree.elements):
        if e.order < 0:
            out.append(Violation(i, "order", f"negative order {e.order}"))
        for field, arity in (("text_feats", TEXT_ARITY), ("image_feats", IMAGE_ARITY), ("bg_image_feats", IMAGE_ARITY)):
            vec = getattr(e, field)
            if vec is not None:
                if len(vec) != arity:
                    out.append(Violation(i, "arity", f"{field} has {len(vec)} values, expected {arity}"))
                elif not all(math.isfinite(v) for v in vec):
                    out.append(Violation(i, "finite", f"{field} contains a non-finite value"))
        if e.style is not None:
            for name, col in (("background", e.style.background), ("text", e.style.text)):
                if col is not None and not all(0 <= c <= 255 for c in col):
                    out.append(Violation(i, "channel", f"{name} color {tuple(col)} outside [0,255]"))
            if (e.style.text is None) == e.has_text:
                out.append(Violation(i, "text-style", "text color must be present exactly when the element has text"))
    return out


def check(tree: PageTree) -> PageTree:
    violations = validate(tree)
    if violations:
        raise PageValidationError(violations)
    return tree


def preorder(tree: PageTree) -> list[int]:
    """Indices in pre-order traversal (root first, siblings by ``order``)."""
    check(tree)
    kids = tree.children()
    out: list[int] = []
    stack = [0]
    while stack:
        i = stack.pop()
        out.append(i)
        stack.extend(reversed(kids[i]))
    return out


def depths(tree: PageTree) -> list[int]:
    """Per-element depth with the root at depth 1."""
    d = [1] * len(tree.elements)
    for i, e in enumerate(tree.elements):
        if e.parent is not None:
            d[i] = d[e.parent] + 1
    return d


def tree_depth(tree: PageTree) -> int:
    return max(depths(tree))


def tree_depth_recursive(tree: PageTree) -> int:
    kids = tree.children()

    def rec(i: int) -> int:
        return 1 + max((rec(c) for c in kids[i]), default=0)

    return rec(0)


# ---------------------------------------------------------------- serialisation

def _fmt_num(x: float) -> str:
    if not math.isfinite(x):
        raise PageFormatError(f"non-finite number {x!r}")
    s = format(float(x), ".6g")
    return "0" if s == "-0" else s


def canonical_float(x: float) -> float:
    """Round to the 6 significant digits kept by the file format."""
    return float(_fmt_num(x))


def _fmt_vec(v) -> str:
    return "null" if v is None else "[" + ", ".join(_fmt_num(x) for x in v) + "]"


def _fmt_color(c) -> str:
    return "null" if c is None else "[" + ", ".join(str(int(x)) for x in c) + "]"


def _fmt_element(e: Element) -> str:
    if e.style is None:
        style = "null"
    else:
        style = '{"text": ' + _fmt_color(e.style.text) + ', "background": ' + _fmt_color(e.style.background) + "}"
    parent = "null" if e.parent is None else str(int(e.parent))
    return (
        "{"
        f'"parent": {parent}, "order": {int(e.order)}, "tag": {json.dumps(e.tag, ensure_ascii=False)}, '
        f'"text_feats": {_fmt_vec(e.text_feats)}, "image_feats": {_fmt_vec(e.image_feats)}, '
        f'"bg_image_feats": {_fmt_vec(e.bg_image_feats)}, "style": {style}'
        "}"
    )


def dumps(tree: PageTree) -> str:
    """Canonical text: fixed key order, 6-significant-digit floats, LF endings."""
    lines = ["{", f'  "id": {json.dumps(tree.id, ensure_ascii=False)},', '  "elements": [']
    body = [f"    {_fmt_element(e)}" for e in tree.elements]
    lines.append(",\n".join(body))
    lines.extend(["  ]", "}"])
    return "\n".join(lines) + "\n"


def _field_err(where: str, msg: str) -> PageFormatError:
    return PageFormatError(f"{where}: {msg}")


def _parse_vec(raw, where: str, arity: int):
    if raw is None:
        return None
    if not isinstance(raw, list):
        raise _field_err(where, "expected a list or null")
    if len(raw) != arity:
        raise _field_err(where, f"arity error: expected {arity} values, got {len(raw)}")
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw):
        raise _field_err(where, "expected numbers")
    return tuple(float(x) for x in raw)


def _parse_color(raw, where: str):
    if raw is None:
        return None
    if not isinstance(raw, list) or len(raw) != 4 or not all(isinstance(x, int) and not isinstance(x, bool) for x in raw):
        raise _field_err(where, "expected [r, g, b, a] integers")
    if not all(0 <= x <= 255 for x in raw):
        raise _field_err(where, f"channel outside [0,255]: {raw}")
    return RgbaColor(*raw)


def from_dict(doc) -> PageTree:
    if not isinstance(doc, dict):
        raise PageFormatError("top level: expected an object")
    if not isinstance(doc.get("id"), str):
        raise PageFormatError("id: expected a string")
    raw_elements = doc.get("elements")
    if not isinstance(raw_elements, list):
        raise PageFormatError("elements: expected a list")
    elements = []
    for i, raw in enumerate(raw_elements):
        where = f"elements[{i}]"
        if not isinstance(raw, dict):
            raise _field_err(where, "expected an object")
        parent = raw.get("parent")
        if parent is not None and (not isinstance(parent, int) or isinstance(parent, bool)):
            raise _field_err(where + ".parent", "expected an integer or null")
        order = raw.get("order")
        if not isinstance(order, int) or isinstance(order, bool):
            raise _field_err(where + ".order", "expected an integer")
        tag = raw.get("tag")
        if not isinstance(tag, str):
            raise _field_err(where + ".tag", "expected a string")
        style_raw = raw.get("style")
        style = None
        if style_raw is not None:
            if not isinstance(style_raw, dict):
                raise _field_err(where + ".style", "expected an object or null")
            bg = _parse_color(style_raw.get("background"), where + ".style.background")
            if bg is None:
                raise _field_err(where + ".style.background", "background color is required")
            style = ColorStyle(background=bg, text=_parse_color(style_raw.get("text"), where + ".style.text"))
        elements.append(Element(
            parent=parent,
            order=order,
            tag=tag,
            text_feats=_parse_vec(raw.get("text_feats"), where + ".text_feats", TEXT_ARITY),
            image_feats=_parse_vec(raw.get("image_feats"), where + ".image_feats", IMAGE_ARITY),
            bg_image_feats=_parse_vec(raw.get("bg_image_feats"), where + ".bg_image_feats", IMAGE_ARITY),
            style=style,
        ))
    return PageTree(id=doc["id"], elements=tuple(elements))


def loads(text: str) -> PageTree:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PageFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return check(from_dict(doc))


def read_page(src) -> PageTree:
    """Read from a path or a binary/text stream."""
    if isinstance(src, (str, Path)):
        data = Path(src).read_bytes()
    else:
        data = src.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PageFormatError(f"not UTF-8: {exc}") from exc
    return loads(data)


def write_page(tree: PageTree, dst) -> None:
    data = dumps(check(tree)).encode("utf-8")
    if isinstance(dst, (str, Path)):
        Path(dst).write_bytes(data)
    elif isinstance(dst, io.TextIOBase):
        dst.write(data.decode("utf-8"))
    else:
        dst.write(data)
