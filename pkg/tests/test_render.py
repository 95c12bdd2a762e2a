import hashlib
import struct
import zlib

import numpy as np
import pytest

from webcolor.page import RgbaColor
from webcolor.render import (HEIGHT, WIDTH, Rect, composite, encode_png, layout, pixel_histogram, rasterize,
                             render_page, split_heights, subtree_sizes, write_png)

from conftest import styled

RED = RgbaColor(255, 0, 0, 255)


def test_single_element_fills_canvas():
    page = styled([(None, "html", False)], bg=RED)
    assert layout(page) == [Rect(0, 0, WIDTH, HEIGHT)]
    buf = render_page(page)
    assert buf.shape == (HEIGHT, WIDTH, 3) and buf.dtype == np.uint8
    assert (buf == [255, 0, 0]).all()


def test_two_equal_children_split_evenly():
    page = styled([(None, "html", False), (0, "div", False), (0, "div", False)])
    rects = layout(page)
    inner = HEIGHT - 8
    assert rects[1] == Rect(4, 4, WIDTH - 8, inner // 2)
    assert rects[2] == Rect(4, 4 + inner // 2, WIDTH - 8, inner // 2)


def test_heights_follow_subtree_sizes():
    page = styled([(None, "html", False), (0, "div", False), (1, "p", False), (1, "p", False), (0, "div", False)])
    assert subtree_sizes(page) == [5, 3, 1, 1, 1]
    rects = layout(page)
    assert rects[1].h == (HEIGHT - 8) * 3 // 4
    assert rects[1].h + rects[4].h == HEIGHT - 8


def test_minimum_height():
    assert split_heights(10, [1, 1, 1, 1]) == [8, 8, 8, 8]
    assert split_heights(100, [1, 98, 1])[0] == 8
    assert sum(split_heights(632, [3, 5, 7])) == 632


def test_layout_is_deterministic(tiny_corpus):
    for page in tiny_corpus:
        assert layout(page) == layout(page)


def test_half_alpha_red_over_white():
    page = styled([(None, "html", False)], bg=RgbaColor(255, 0, 0, 128))
    # the renderer maps the 8-bit alpha to 128/255; the float form 0.5 is the hand case
    assert tuple(composite(np.array([255, 0, 0]), np.array([255, 255, 255]), 0.5)) == (255, 128, 128)
    px = render_page(page)[0, 0]
    want = [int(np.floor(a * 128 / 255 + b * (1 - 128 / 255) + 0.5)) for a, b in zip((255, 0, 0), (255, 255, 255))]
    assert list(px) == want


def test_alpha_extremes_are_exact():
    rng = np.random.default_rng(0)
    dst = rng.integers(0, 256, size=(5, 5, 3)).astype(np.uint8)
    src = np.array([12, 34, 56])
    assert np.array_equal(composite(src, dst, 0.0), dst)
    assert (composite(src, dst, 1.0) == src).all()


def test_text_bar_is_centred():
    page = styled([(None, "p", True)])
    buf = render_page(page)
    dark_rows = np.flatnonzero((buf[:, :, 0] == 0).all(axis=1))
    assert list(dark_rows) == list(range(HEIGHT // 2 - 4, HEIGHT // 2 + 4))


def _brute_histogram(buf):
    h = np.zeros(512)
    for r, g, b in buf.reshape(-1, 3).tolist():
        h[64 * (r // 32) + 8 * (g // 32) + b // 32] += 1
    return h / (buf.shape[0] * buf.shape[1])


def test_pixel_histogram():
    solid = np.full((4, 6, 3), 200, dtype=np.uint8)
    h = pixel_histogram(solid)
    assert h[64 * 6 + 8 * 6 + 6] == 1.0
    half = solid.copy()
    half[:2] = 0
    h = pixel_histogram(half)
    assert h[0] == 0.5 and h[64 * 6 + 8 * 6 + 6] == 0.5
    rng = np.random.default_rng(0)
    buf = rng.integers(0, 256, size=(20, 30, 3)).astype(np.uint8)
    assert np.allclose(pixel_histogram(buf), _brute_histogram(buf))
    assert abs(pixel_histogram(buf).sum() - 1.0) <= 1e-12


def _decode_png(data):
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    pos, chunks = 8, {}
    while pos < len(data):
        (n,) = struct.unpack(">I", data[pos:pos + 4])
        kind = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + n]
        (crc,) = struct.unpack(">I", data[pos + 8 + n:pos + 12 + n])
        assert crc == zlib.crc32(kind + body) & 0xFFFFFFFF
        chunks[kind] = chunks.get(kind, b"") + body
        pos += 12 + n
    w, h, depth, ctype = struct.unpack(">IIBB", chunks[b"IHDR"][:10])
    raw = np.frombuffer(zlib.decompress(chunks[b"IDAT"]), dtype=np.uint8).reshape(h, 1 + 3 * w)
    assert (depth, ctype) == (8, 2) and (raw[:, 0] == 0).all()
    return raw[:, 1:].reshape(h, w, 3)


def test_png_round_trip_and_stable_hash(tmp_path, tiny_corpus):
    buf = render_page(tiny_corpus[0])
    assert np.array_equal(_decode_png(encode_png(buf)), buf)
    write_png(tmp_path / "a.png", buf)
    write_png(tmp_path / "b.png", render_page(tiny_corpus[0]))
    assert hashlib.sha256((tmp_path / "a.png").read_bytes()).digest() == \
        hashlib.sha256((tmp_path / "b.png").read_bytes()).digest()
    with pytest.raises(ValueError):
        encode_png(np.zeros((2, 2), dtype=np.uint8))


def test_rasterize_with_external_styles(tiny_corpus):
    page = tiny_corpus[1]
    assert np.array_equal(rasterize(page, page.styles(), layout(page)), render_page(page))
