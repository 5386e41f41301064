"""Deterministic rendering of an instance + tour to a gridded PNG.

Rasterization and PNG encoding are done in-process (numpy canvas, stdlib
zlib) so identical inputs give identical bytes on every platform; the images
feed multimodal prompts and golden-file tests.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .core import Instance, Tour
from .subproblem import BoxRegion

PAD_FRACTION = 0.1  # margin added around the content on each axis
GRID_MIN, GRID_MAX = 2, 40

_BG = (255, 255, 255)
_GRID = (200, 200, 200)
_EDGE = (0, 0, 0)
_NODE = (220, 20, 20)
_TEXT = (60, 60, 60)

# 3x5 bitmap glyphs, drawn at 2x scale
_GLYPHS = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
    "-": ("000", "000", "111", "000", "000"),
    "+": ("000", "010", "111", "010", "000"),
    ".": ("000", "000", "000", "000", "010"),
    "e": ("000", "111", "111", "100", "111"),
}
_CHAR_W, _CHAR_H, _SCALE = 3, 5, 2


class RenderError(ValueError):
    """The instance cannot be mapped onto a raster (zero-area bounding box)."""


@dataclass(frozen=True)
class RenderOptions:
    width: int = 1024
    height: int = 1024
    node_radius: int = 2
    line_width: int = 1
    margin_left: int = 80
    margin_bottom: int = 22
    box: BoxRegion | None = None  # restrict drawing to this sub-region


@dataclass(frozen=True)
class Viewport:
    """Affine world <-> pixel map over padded bounds (world y points up)."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    width: int
    height: int
    offset_x: int

    def to_pixel(self, x: float, y: float) -> tuple[float, float]:
        px = self.offset_x + (x - self.x_lo) / (self.x_hi - self.x_lo) * (self.width - 1)
        py = (self.y_hi - y) / (self.y_hi - self.y_lo) * (self.height - 1)
        return px, py

    def to_world(self, px: float, py: float) -> tuple[float, float]:
        x = self.x_lo + (px - self.offset_x) / (self.width - 1) * (self.x_hi - self.x_lo)
        y = self.y_hi - py / (self.height - 1) * (self.y_hi - self.y_lo)
        return x, y


def padded_bounds(x_min: float, x_max: float, y_min: float, y_max: float) -> tuple[float, float, float, float]:
    """Expand raw bounds by 10% of each axis span (the prompt margin).

    A zero span on one axis borrows the other axis's padding so the map stays
    invertible; both spans zero is unmappable.
    """
    span_x = x_max - x_min
    span_y = y_max - y_min
    if span_x <= 0 and span_y <= 0:
        raise RenderError("all nodes coincide; bounding box has zero area")
    pad_x = PAD_FRACTION * span_x if span_x > 0 else max(1.0, PAD_FRACTION * span_y)
    pad_y = PAD_FRACTION * span_y if span_y > 0 else max(1.0, PAD_FRACTION * span_x)
    return x_min - pad_x, x_max + pad_x, y_min - pad_y, y_max + pad_y


def grid_line_count(y_min: float, y_max: float) -> int:
    """Lines per axis from the vertical span, clamped to [2, 40]."""
    span = max(y_max - y_min, 0.0)
    count = math.ceil(math.sqrt(span / 100.0))
    return max(GRID_MIN, min(GRID_MAX, count))


def grid_lines(inst: Instance) -> int:
    """Grid line count for an instance (same count on both axes)."""
    _, _, y_min, y_max = inst.bounds()
    return grid_line_count(y_min, y_max)


def _format_label(v: float) -> str:
    return f"{v:.6g}"


def _png_encode(rgb: np.ndarray) -> bytes:
    h, w, _ = rgb.shape
    raw = b"".join(b"\x00" + rgb[r].tobytes() for r in range(h))

    def chunk(tag: bytes, data: bytes) -> bytes:
        return (struct.pack(">I", len(data)) + tag + data
                + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF))

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b""))


def _paint(canvas: np.ndarray, xs: np.ndarray, ys: np.ndarray, color) -> None:
    h, w, _ = canvas.shape
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    canvas[ys[ok], xs[ok]] = color


def _draw_line(canvas: np.ndarray, x0: float, y0: float, x1: float, y1: float,
               color, width: int = 1) -> None:
    steps = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    xs = np.rint(np.linspace(x0, x1, steps)).astype(np.int64)
    ys = np.rint(np.linspace(y0, y1, steps)).astype(np.int64)
    half = width // 2
    for ox in range(-half, width - half):
        for oy in range(-half, width - half):
            _paint(canvas, xs + ox, ys + oy, color)


def _draw_disks(canvas: np.ndarray, xs: np.ndarray, ys: np.ndarray, radius: int, color) -> None:
    offs = [(ox, oy) for ox in range(-radius, radius + 1)
            for oy in range(-radius, radius + 1) if ox * ox + oy * oy <= radius * radius]
    for ox, oy in offs:
        _paint(canvas, xs + ox, ys + oy, color)


def _draw_text(canvas: np.ndarray, x: int, y: int, text: str, color) -> None:
    cx = x
    for ch in text:
        glyph = _GLYPHS.get(ch)
        if glyph is not None:
            for ry, rowbits in enumerate(glyph):
                for rx, bit in enumerate(rowbits):
                    if bit == "1":
                        y0, x0 = y + ry * _SCALE, cx + rx * _SCALE
                        canvas[y0:y0 + _SCALE, x0:x0 + _SCALE] = color
        cx += (_CHAR_W + 1) * _SCALE


def render(inst: Instance, tour: Tour | None = None,
           opts: RenderOptions = RenderOptions()) -> bytes:
    """Raster the instance (and tour, if given) to PNG bytes.

    Red node markers, black tour edges, grey grid with world-coordinate axis
    labels; world y points up. With ``opts.box`` set, only that sub-region's
    nodes and fully-interior edges are drawn, over the box's padded bounds.
    """
    if tour is not None and tour.n != inst.n:
        raise ValueError("tour does not match instance")

    coords = inst.coords
    if opts.box is not None:
        member = opts.box.contains(coords)
        x_lo, x_hi, y_lo, y_hi = padded_bounds(
            opts.box.x_min, opts.box.x_max, opts.box.y_min, opts.box.y_max)
        raw_y = (opts.box.y_min, opts.box.y_max)
    else:
        member = np.ones(inst.n, dtype=bool)
        bx0, bx1, by0, by1 = inst.bounds()
        x_lo, x_hi, y_lo, y_hi = padded_bounds(bx0, bx1, by0, by1)
        raw_y = (by0, by1)

    view = Viewport(x_lo, x_hi, y_lo, y_hi, opts.width, opts.height, opts.margin_left)
    canvas = np.full((opts.height + opts.margin_bottom, opts.margin_left + opts.width, 3),
                     255, dtype=np.uint8)

    count = grid_line_count(*raw_y)
    grid_x = np.linspace(x_lo, x_hi, count)
    grid_y = np.linspace(y_lo, y_hi, count)
    for gx in grid_x:
        px, _ = view.to_pixel(gx, y_lo)
        col = int(round(px))
        if opts.margin_left <= col < canvas.shape[1]:
            canvas[0:opts.height, col] = _GRID
    for gy in grid_y:
        _, py = view.to_pixel(x_lo, gy)
        row = int(round(py))
        if 0 <= row < opts.height:
            canvas[row, opts.margin_left:] = _GRID

    if tour is not None:
        order = tour.order
        a = order
        b = np.roll(order, -1)
        keep = member[a] & member[b]
        pa = coords[a[keep]]
        pb = coords[b[keep]]
        for (x0, y0), (x1, y1) in zip(pa, pb):
            px0, py0 = view.to_pixel(x0, y0)
            px1, py1 = view.to_pixel(x1, y1)
            _draw_line(canvas, px0, py0, px1, py1, _EDGE, opts.line_width)

    pts = coords[member]
    if pts.size:
        px = view.offset_x + (pts[:, 0] - x_lo) / (x_hi - x_lo) * (opts.width - 1)
        py = (y_hi - pts[:, 1]) / (y_hi - y_lo) * (opts.height - 1)
        _draw_disks(canvas, np.rint(px).astype(np.int64), np.rint(py).astype(np.int64),
                    opts.node_radius, _NODE)

    for gy in grid_y:
        _, py = view.to_pixel(x_lo, gy)
        row = int(round(py))
        _draw_text(canvas, 2, min(max(row - 5, 0), opts.height - 11),
                   _format_label(float(gy)), _TEXT)
    for gx in grid_x:
        px, _ = view.to_pixel(gx, y_lo)
        col = int(round(px))
        label = _format_label(float(gx))
        width_px = len(label) * (_CHAR_W + 1) * _SCALE
        at = min(max(col - width_px // 2, opts.margin_left), canvas.shape[1] - width_px - 1)
        _draw_text(canvas, at, opts.height + 4, label, _TEXT)

    return _png_encode(canvas)
