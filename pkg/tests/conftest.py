import sys

import numpy as np
import pytest

from webcolor.corpus import CorpusConfig, generate_corpus
from webcolor.page import ColorStyle, Element, PageTree, RgbaColor

WHITE = RgbaColor(255, 255, 255, 255)
BLACK = RgbaColor(0, 0, 0, 255)
TEXT = (1.0, 3.0) + (0.0,) * 10


def make_page(spec, page_id="p", styles=None):
    """Build a page from ``[(parent, tag, has_text), ...]`` listed in pre-order."""
    orders: dict = {}
    elements = []
    for i, (parent, tag, has_text) in enumerate(spec):
        order = orders.get(parent, 0)
        orders[parent] = order + 1
        style = None
        if styles is not None:
            style = styles[i]
        elements.append(Element(parent=parent, order=order, tag=tag,
                                text_feats=TEXT if has_text else None, style=style))
    return PageTree(id=page_id, elements=tuple(elements))


def styled(spec, page_id="p", bg=WHITE, text=BLACK):
    styles = [ColorStyle(background=bg, text=text if t else None) for _, _, t in spec]
    return make_page(spec, page_id, styles)


def jitter(module, rng, scale=0.3):
    # zero-initialised biases put max-pool members in exact ties, a kink where
    # finite differences are meaningless; move every parameter off it
    for p in module.parameters():
        p.data[...] = rng.normal(0.0, scale, size=p.shape)


SMALL = [(None, "html", False), (0, "body", False), (1, "div", True), (1, "p", True)]


@pytest.fixture
def small_page():
    return styled(SMALL)


@pytest.fixture(scope="session")
def tiny_corpus():
    return generate_corpus(CorpusConfig(n_pages=12, seed=3, min_size=4, max_size=10))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
