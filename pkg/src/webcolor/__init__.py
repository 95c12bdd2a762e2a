"""Colorization of tree-structured web pages.

Pages are ordered trees of elements with content features; a core model
predicts quantized text and background colors per element and an upsampler
restores full-resolution RGBA values.
"""

from .codec import QuantizedColor, QuantizedStyle, quantize, reconstruct
from .page import ColorStyle, Element, PageTree, RgbaColor, read_page, write_page

__version__ = "0.1.0"

__all__ = [
    "ColorStyle", "Element", "PageTree", "QuantizedColor", "QuantizedStyle", "RgbaColor",
    "quantize", "read_page", "reconstruct", "write_page",
]
