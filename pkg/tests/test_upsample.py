from dataclasses import replace

import numpy as np
import pytest

from webcolor import tensor as T
from webcolor.batch import PageBatch
from webcolor.codec import QuantizedColor, QuantizedStyle, bin_bounds, quantize, quantize_style
from webcolor.corpus import CorpusConfig, generate_corpus
from webcolor.models import ModelConfig
from webcolor.page import ColorStyle, RgbaColor
from webcolor.tensor import Tensor
from webcolor.training import train
from webcolor.upsample import Upsampler, apply_proportions, upsample_loss

from conftest import SMALL, jitter, styled

TOY8 = ModelConfig(kind="upsampler", d_model=8, n_heads=2, n_layers=1, d_ffn=16)


def random_qstyles(page, rng):
    out = []
    for e in page.elements:
        bg = QuantizedColor(int(rng.integers(1, 513)), int(rng.integers(1, 9)))
        text = QuantizedColor(int(rng.integers(1, 513)), int(rng.integers(1, 9))) if e.has_text else None
        out.append(QuantizedStyle(background=bg, text=text))
    return out


def test_output_shape_and_range(rng, tiny_corpus):
    model = Upsampler(TOY8, seed=0)
    jitter(model, rng, 2.0)
    styles = [random_qstyles(p, rng) for p in tiny_corpus]
    for page, props in zip(tiny_corpus, model.predict(tiny_corpus, styles)):
        assert props.shape == (len(page), 8)
        assert props.min() >= 0.0 and props.max() <= 1.0


def test_loss_arithmetic(small_page):
    batch = PageBatch([small_page])
    target = np.zeros((4, 8))
    assert upsample_loss(Tensor(target), target, batch).item() == 0.0
    single = PageBatch([styled([(None, "html", False)])])
    pred = np.zeros((1, 8))
    pred[0, 4] = 0.5
    # one element without text contributes its 4 background entries
    assert upsample_loss(Tensor(pred), np.zeros((1, 8)), single).item() == pytest.approx(0.25 / 4)


def test_no_text_page_counts_four_entries_per_element():
    page = styled([(None, "html", False), (0, "div", False), (0, "div", False)])
    batch = PageBatch([page])
    pred = np.ones((3, 8))
    # text entries are all wrong by 1 but masked; background entries wrong by 1 everywhere
    pred[:, 4:] = 0.5
    assert upsample_loss(Tensor(pred), np.zeros((3, 8)), batch).item() == pytest.approx(0.25)


def test_zero_output_layer_gives_mid_bin_colors(rng, tiny_corpus):
    model = Upsampler(TOY8, seed=0)
    model.out.weight.data[...] = 0.0
    model.out.bias.data[...] = 0.0
    styles = [[quantize_style(s) for s in p.styles()] for p in tiny_corpus]
    for page_styles, full in zip(styles, model.apply(tiny_corpus, styles)):
        for q, c in zip(page_styles, full):
            lo = [bin_bounds(k)[0] for k in _bins(q.background)]
            assert tuple(c.background) == tuple(x + 16 for x in lo)


def _bins(q):
    rgb = q.rgb - 1
    return (rgb // 64, (rgb // 8) % 8, rgb % 8, q.alpha - 1)


def test_bin_stability_on_random_pages(rng, tiny_corpus):
    model = Upsampler(TOY8, seed=0)
    jitter(model, rng, 3.0)
    for _ in range(3):
        styles = [random_qstyles(p, rng) for p in tiny_corpus]
        for page_styles, full in zip(styles, model.apply(tiny_corpus, styles)):
            for q, c in zip(page_styles, full):
                assert quantize(c.background) == q.background
                if q.text is not None:
                    assert quantize(c.text) == q.text


def test_extreme_proportions_stay_in_bin():
    q = [QuantizedStyle(background=QuantizedColor(512, 8), text=QuantizedColor(1, 1))]
    for v in (0.0, 1.0, 1e-17, 1 - 1e-17):
        c = apply_proportions(q, np.full((1, 8), v))[0]
        assert quantize(c.background) == q[0].background and quantize(c.text) == q[0].text


def test_loss_gradients(rng):
    model = Upsampler(TOY8, seed=0)
    jitter(model, rng, 0.3)
    batch = PageBatch([styled(SMALL, bg=RgbaColor(40, 100, 250, 200), text=RgbaColor(3, 77, 130, 255))])
    errs = T.check_gradients(lambda: model.loss(batch), dict(model.named_parameters()), max_entries=6)
    assert max(errs.values()) <= 1e-4, errs


def test_predict_is_deterministic(tiny_corpus):
    model = Upsampler(TOY8, seed=3)
    styles = [[quantize_style(s) for s in p.styles()] for p in tiny_corpus]
    a, b = model.predict(tiny_corpus, styles), model.predict(tiny_corpus, styles)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def _to_floor(c):
    return RgbaColor(*(bin_bounds(v // 32)[0] for v in c))


def test_learns_bin_floor_corpus():
    pages = generate_corpus(CorpusConfig(n_pages=40, seed=5, min_size=6, max_size=16))
    floored = []
    for p in pages:
        els = tuple(replace(e, style=ColorStyle(background=_to_floor(e.style.background),
                                                text=None if e.style.text is None else _to_floor(e.style.text)))
                    for e in p.elements)
        floored.append(replace(p, elements=els))
    model = Upsampler(ModelConfig.preset("toy", kind="upsampler"), seed=0)
    hist = train(model, floored, iters=300, batch_size=8, lr=1e-3, seed=0)
    assert hist[-1] < 0.02, hist[-1]
