import warnings

import numpy as np
import pytest

from webcolor import codec
from webcolor.codec import QuantizedColor, QuantizedStyle
from webcolor.page import ColorStyle, RgbaColor


def test_quantize_examples():
    assert codec.quantize((0, 0, 0, 255)) == QuantizedColor(1, 8)
    assert codec.quantize((255, 255, 255, 0)) == QuantizedColor(512, 1)
    assert codec.quantize((32, 64, 96, 128)) == QuantizedColor(1 + 64 * 1 + 8 * 2 + 3, 5) == QuantizedColor(84, 5)


def test_quantize_is_surjective_on_bin_floors():
    seen = {codec.quantize((32 * r, 32 * g, 32 * b, 32 * a))
            for r in range(8) for g in range(8) for b in range(8) for a in range(8)}
    assert len(seen) == 512 * 8


def test_bin_bounds():
    assert codec.bin_bounds(0) == (0, 31)
    assert codec.bin_bounds(7) == (224, 255)
    assert codec.bin_bounds(3) == (96, 127)
    for bad in (-1, 8):
        with pytest.raises(ValueError):
            codec.bin_bounds(bad)


def test_gt_proportions_examples():
    assert codec.gt_proportions((32, 63, 40, 0)) == pytest.approx((0.0, 1.0, 8 / 31, 0.0), abs=1e-12)
    assert round(codec.gt_proportions((40, 0, 0, 0))[0], 6) == 0.258065


def test_reconstruct_examples():
    assert codec.reconstruct(QuantizedColor(84, 5), (0, 0, 0, 0)) == RgbaColor(32, 64, 96, 128)
    assert codec.reconstruct(QuantizedColor(84, 5), (1, 1, 1, 1)) == RgbaColor(63, 95, 127, 159)


def test_reconstruct_clamps_with_warning():
    with pytest.warns(codec.ProportionWarning):
        c = codec.reconstruct(QuantizedColor(84, 5), (-0.5, 1.5, 0.0, 0.0))
    assert c == RgbaColor(32, 95, 96, 128)


def test_exhaustive_channel_round_trip():
    for ch in range(4):
        for v in range(256):
            col = [0, 0, 0, 0]
            col[ch] = v
            assert codec.reconstruct(codec.quantize(col), codec.gt_proportions(col)) == tuple(col)


def test_bin_stability_random(rng):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for _ in range(10_000):
            q = QuantizedColor(int(rng.integers(1, 513)), int(rng.integers(1, 9)))
            assert codec.quantize(codec.reconstruct(q, rng.random(4))) == q


def test_style_helpers():
    s = ColorStyle(background=RgbaColor(255, 255, 255, 255), text=RgbaColor(32, 64, 96, 128))
    q = codec.quantize_style(s)
    assert q == QuantizedStyle(QuantizedColor(512, 8), QuantizedColor(84, 5))
    props = codec.style_proportions(s)
    assert len(props) == 8 and props[:4] == (0.0, 0.0, 0.0, 0.0) and props[4:] == (1.0, 1.0, 1.0, 1.0)
    assert codec.reconstruct_style(q, props) == s
    no_text = ColorStyle(background=RgbaColor(1, 2, 3, 4))
    assert codec.quantize_style(no_text).text is None
    assert codec.style_proportions(no_text)[:4] == (0.0,) * 4


def test_quantize_array_matches_scalar(rng):
    rgb = rng.integers(0, 256, size=(50, 3))
    got = codec.quantize_array(rgb)
    want = [codec.quantize(tuple(c) + (0,)).rgb - 1 for c in rgb]
    assert np.array_equal(got, want)


def test_channel_bins_inverts_packing():
    assert codec.channel_bins(QuantizedColor(84, 5)) == (1, 2, 3, 4)
    with pytest.raises(ValueError):
        codec.channel_bins(QuantizedColor(513, 1))
