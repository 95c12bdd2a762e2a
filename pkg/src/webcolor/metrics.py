"""Evaluation: accuracy, macro F, Frechet color distance and contrast auditing.

Styles may be given either as full-resolution ``ColorStyle`` or as
``QuantizedStyle``; accuracy, F-score and the background / text histograms
work on quantized indices, the pixel histogram on a rendered preview.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codec import N_RGB, QuantizedStyle, quantize_style
from .page import ColorStyle, PageTree, RgbaColor
from .render import pixel_histogram, render_page

WHITE = (255.0, 255.0, 255.0)
CONTRAST_THRESHOLD = 4.5
JACOBI_TOL = 1e-10


def _quantized(styles) -> list[QuantizedStyle]:
    if isinstance(styles, PageTree):
        styles = styles.styles()
    return [s if isinstance(s, QuantizedStyle) else quantize_style(s) for s in styles]


def _slots(pred: Sequence, gt: Sequence) -> tuple[list, list]:
    """Aligned (pred, gt) QuantizedColor pairs; text counts where ground truth has text."""
    if len(pred) != len(gt):
        raise ValueError(f"{len(pred)} predicted pages vs {len(gt)} ground-truth pages")
    p_out, g_out = [], []
    for k, (ps, gs) in enumerate(zip(pred, gt)):
        ps, gs = _quantized(ps), _quantized(gs)
        if len(ps) != len(gs):
            raise ValueError(f"page {k}: {len(ps)} predicted elements vs {len(gs)}")
        for a, b in zip(ps, gs):
            p_out.append(a.background)
            g_out.append(b.background)
            if b.text is not None:
                p_out.append(a.text)
                g_out.append(b.text)
    return p_out, g_out


def accuracy(pred: Sequence, gt: Sequence) -> tuple[float, float]:
    """Exact-match fractions of RGB and alpha indices over contributing slots."""
    p, g = _slots(pred, gt)
    if not g:
        return 1.0, 1.0
    rgb = sum(a is not None and a.rgb == b.rgb for a, b in zip(p, g))
    alpha = sum(a is not None and a.alpha == b.alpha for a, b in zip(p, g))
    return rgb / len(g), alpha / len(g)


def macro_f1(pred_labels: Sequence, gt_labels: Sequence) -> float:
    """Mean class-wise F1 over the union of classes seen in either list."""
    pred_labels, gt_labels = list(pred_labels), list(gt_labels)
    classes = set(gt_labels) | set(p for p in pred_labels if p is not None)
    if not classes:
        return 1.0
    scores = []
    for c in classes:
        tp = sum(p == c and g == c for p, g in zip(pred_labels, gt_labels))
        n_pred = sum(p == c for p in pred_labels)
        n_gt = sum(g == c for g in gt_labels)
        prec = tp / n_pred if n_pred else 0.0
        rec = tp / n_gt if n_gt else 0.0
        scores.append(2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0)
    return float(np.mean(scores))


def macro_f(pred: Sequence, gt: Sequence) -> tuple[float, float]:
    p, g = _slots(pred, gt)
    rgb = macro_f1([None if a is None else a.rgb for a in p], [b.rgb for b in g])
    alpha = macro_f1([None if a is None else a.alpha for a in p], [b.alpha for b in g])
    return rgb, alpha


def color_histogram(styles, kind: str) -> np.ndarray:
    """512-bin quantized RGB histogram (0-based) of one page, normalized by contributing elements."""
    hist = np.zeros(N_RGB)
    colors = [s.background if kind == "bg" else s.text for s in _quantized(styles)]
    if kind not in ("bg", "text"):
        raise ValueError(f"unknown histogram kind {kind!r}")
    colors = [c for c in colors if c is not None]
    for c in colors:
        hist[c.rgb - 1] += 1.0
    return hist / len(colors) if colors else hist


def histogram(pages: Sequence[PageTree], kind: str, styles: Sequence | None = None) -> np.ndarray:
    """``(n_pages, 512)`` histograms; ``kind`` is ``bg``, ``text`` or ``pixel``."""
    styles = [p.styles() for p in pages] if styles is None else styles
    if kind == "pixel":
        rows = [pixel_histogram(render_page(p, s)) for p, s in zip(pages, styles)]
    else:
        rows = [color_histogram(s, kind) for s in styles]
    return np.array(rows).reshape(len(rows), N_RGB)


@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "GaussianStats":
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError(f"need at least 2 feature rows to fit a Gaussian, got {x.shape[0] if x.ndim else 0}")
        mean = x.mean(axis=0)
        d = x - mean
        cov = d.T @ d / (x.shape[0] - 1)
        return cls(mean, 0.5 * (cov + cov.T))


def _round_robin(n: int) -> list[list[tuple[int, int]]]:
    """Rounds of disjoint index pairs covering every pair once (circle method)."""
    m = n + (n % 2)
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(idx[i], idx[m - 1 - i]) for i in range(m // 2)]
        rounds.append([(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n])
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return rounds


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Pairs are visited in round-robin order so each round's rotations touch
    disjoint rows and run as one vectorized update.  Stops when the
    off-diagonal Frobenius norm drops below ``tol`` (relative to the full norm
    for large matrices).  Returns ``(eigenvalues, eigenvectors)`` with
    eigenvectors in columns, eigenvalues ascending.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("matrix has non-finite entries")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    if n < 2:
        return np.diag(a).copy(), v
    scale = max(np.linalg.norm(a), 1.0)
    rounds = [(np.array([p for p, _ in r]), np.array([q for _, q in r])) for r in _round_robin(n)]
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off < tol * scale:
            break
        for p, q in rounds:
            apq = a[p, q]
            live = np.abs(apq) > 1e-300
            if not live.any():
                continue
            p, q, apq = p[live], q[live], apq[live]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[theta == 0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # columns, then rows: A <- J^T A J with J acting on (p, q)
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def sqrtm_psd(m: np.ndarray) -> np.ndarray:
    """Symmetric square root with eigenvalues clamped at zero."""
    w, v = jacobi_eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """``|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)``.

    Dimensions with zero variance under both Gaussians have zero rows and
    columns in every matrix involved, so the trace term is computed on the
    remaining active dimensions only.
    """
    for g in (a, b):
        if not (np.isfinite(g.mean).all() and np.isfinite(g.cov).all()):
            raise ValueError("Gaussian statistics contain non-finite values")
    diff = a.mean - b.mean
    active = np.flatnonzero((np.diag(a.cov) > 0) | (np.diag(b.cov) > 0))
    trace = 0.0
    if len(active):
        sa = a.cov[np.ix_(active, active)]
        sb = b.cov[np.ix_(active, active)]
        root = sqrtm_psd(sa)
        w, _ = jacobi_eigh(root @ sb @ root)
        trace = np.trace(sa) + np.trace(sb) - 2.0 * np.sum(np.sqrt(np.clip(w, 0.0, None)))
    return float(diff @ diff + trace)


def fcd_protocol(generated: Sequence[PageTree], real: Sequence[PageTree], kind: str, seed: int) -> float:
    """Frechet distance between generated styles on one seeded half of the pages and real styles on the other."""
    if len(generated) != len(real):
        raise ValueError(f"{len(generated)} generated pages vs {len(real)} real pages")
    n = len(real)
    if n < 4:
        raise ValueError(f"need at least 4 pages (2 per half), got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    half = n // 2
    gen = [generated[i] for i in perm[:half]]
    ref = [real[i] for i in perm[half:]]
    return frechet_distance(GaussianStats.fit(histogram(gen, kind)), GaussianStats.fit(histogram(ref, kind)))


def _linear(c: float) -> float:
    c = c / 255.0
    return c / 12.92 if c <= 0.03928 else ((c + 0.055) / 1.055) ** 2.4


def relative_luminance(rgb: Sequence[float]) -> float:
    r, g, b = (_linear(c) for c in rgb[:3])
    return 0.2126 * r + 0.7152 * g + 0.0722 * b


def over(src: Sequence[float], dst: Sequence[float]) -> tuple[float, float, float]:
    """Composite an RGBA ``src`` over an opaque RGB ``dst`` (exact, unrounded)."""
    a = src[3] / 255.0
    return tuple(a * s + (1.0 - a) * d for s, d in zip(src[:3], dst[:3]))


def contrast_ratio(fg: Sequence[float], bg: Sequence[float]) -> float:
    """WCAG contrast of ``fg`` composited over ``bg``; ``bg`` is treated as opaque."""
    fg_rgb = over(fg, bg) if len(fg) == 4 else tuple(fg)
    l1, l2 = relative_luminance(fg_rgb), relative_luminance(bg)
    hi, lo = max(l1, l2), min(l1, l2)
    return (hi + 0.05) / (lo + 0.05)


@dataclass(frozen=True)
class ContrastViolation:
    index: int
    ratio: float


def effective_backgrounds(tree: PageTree, styles: Sequence[ColorStyle] | None = None) -> list[tuple[float, float, float]]:
    """Per element, its own background composited over every ancestor's, down from opaque white."""
    styles = tree.styles() if styles is None else styles
    eff: list[tuple[float, float, float]] = []
    for i, e in enumerate(tree.elements):
        base = WHITE if e.parent is None else eff[e.parent]
        eff.append(over(styles[i].background, base))
    return eff


def audit_page(tree: PageTree, styles: Sequence[ColorStyle] | None = None,
               threshold: float = CONTRAST_THRESHOLD) -> list[ContrastViolation]:
    styles = tree.styles() if styles is None else styles
    eff = effective_backgrounds(tree, styles)
    out = []
    for i, s in enumerate(styles):
        if s.text is None:
            continue
        ratio = contrast_ratio(s.text, eff[i])
        if ratio < threshold:
            out.append(ContrastViolation(i, ratio))
    return out


@dataclass
class ContrastReport:
    pages_violating_fraction: float
    mean_violating_elements: float
    per_page: list[int] = field(default_factory=list)


def aggregate_contrast(pages: Sequence[PageTree], styles: Sequence | None = None) -> ContrastReport:
    if not pages:
        raise ValueError("contrast audit over an empty page set")
    styles = [None] * len(pages) if styles is None else styles
    counts = [len(audit_page(p, s)) for p, s in zip(pages, styles)]
    return ContrastReport(
        pages_violating_fraction=sum(c > 0 for c in counts) / len(counts),
        mean_violating_elements=sum(counts) / len(counts),
        per_page=counts,
    )


def evaluate(generated: Sequence[PageTree], real: Sequence[PageTree], seed: int = 0,
             fcd_scale: float = 1.0) -> dict:
    """All metrics for generated pages against their ground-truth counterparts."""
    by_id = {p.id: p for p in real}
    missing = [g.id for g in generated if g.id not in by_id]
    if missing:
        raise ValueError(f"no ground truth for pages {missing[:5]}")
    real = [by_id[g.id] for g in generated]
    gen_styles = [g.styles() for g in generated]
    real_styles = [r.styles() for r in real]
    rgb, alpha = accuracy(gen_styles, real_styles)
    f_rgb, f_alpha = macro_f(gen_styles, real_styles)
    if len(real) >= 4:
        fcd = {k: fcd_scale * fcd_protocol(generated, real, k, seed) for k in ("bg", "text", "pixel")}
    else:
        # the split protocol needs two pages per half
        fcd = {k: None for k in ("bg", "text", "pixel")}
    contrast = aggregate_contrast(generated)
    return {
        "accuracy": {"rgb": rgb, "alpha": alpha},
        "macro_f": {"rgb": f_rgb, "alpha": f_alpha},
        "fcd": fcd,
        "contrast": {"pct_pages": 100.0 * contrast.pages_violating_fraction,
                     "mean_elements": contrast.mean_violating_elements},
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
