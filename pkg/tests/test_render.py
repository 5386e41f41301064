import struct
import zlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vitsp.core import Instance, Tour, uniform_instance
from vitsp.render import (
    RenderError,
    RenderOptions,
    Viewport,
    grid_line_count,
    grid_lines,
    padded_bounds,
    render,
)
from vitsp.subproblem import BoxRegion

DATA = Path(__file__).parent / "data"

SQUARE = Instance("sq", np.array([(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)]))
SQUARE_TOUR = Tour([0, 1, 2, 3])


def decode_png(data: bytes) -> np.ndarray:
    """Minimal PNG reader for the encoder's own output (filter 0, RGB8)."""
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    at = 8
    w = h = None
    idat = b""
    while at < len(data):
        (length,) = struct.unpack(">I", data[at:at + 4])
        tag = data[at + 4:at + 8]
        payload = data[at + 8:at + 8 + length]
        if tag == b"IHDR":
            w, h, depth, color = struct.unpack(">IIBB", payload[:10])
            assert depth == 8 and color == 2
        elif tag == b"IDAT":
            idat += payload
        at += 12 + length
    raw = zlib.decompress(idat)
    stride = 1 + 3 * w
    rows = []
    for r in range(h):
        line = raw[r * stride:(r + 1) * stride]
        assert line[0] == 0  # no per-row filtering
        rows.append(np.frombuffer(line[1:], dtype=np.uint8).reshape(w, 3))
    return np.stack(rows)


class TestGridFormula:
    def test_span_100_clamps_up_to_two(self):
        assert grid_line_count(0, 100) == 2

    def test_span_10000_gives_ten(self):
        assert grid_line_count(0, 10000) == 10

    def test_span_640000_clamps_down_to_forty(self):
        assert grid_line_count(0, 640000) == 40

    def test_instance_level_count(self):
        inst = Instance("g", np.array([(0.0, 0.0), (5.0, 10000.0)]))
        assert grid_lines(inst) == 10


class TestRender:
    def test_deterministic_bytes(self):
        a = render(SQUARE, SQUARE_TOUR)
        b = render(SQUARE, SQUARE_TOUR)
        assert a == b

    def test_square_golden_bytes(self):
        golden = (DATA / "square_tour.png").read_bytes()
        assert render(SQUARE, SQUARE_TOUR) == golden

    def test_square_has_nodes_edges_and_grid(self):
        img = decode_png(render(SQUARE, SQUARE_TOUR))
        red = (img[:, :, 0] > 180) & (img[:, :, 1] < 100) & (img[:, :, 2] < 100)
        black = (img < 40).all(axis=2)
        grey = (np.abs(img.astype(int) - 200) < 10).all(axis=2)
        assert red.sum() >= 4  # four disks
        assert black.sum() > 100  # four edges
        assert grey.sum() > 100  # grid lines

    def test_without_tour_draws_nodes_only(self):
        img = decode_png(render(SQUARE, None))
        black = (img < 40).all(axis=2)
        assert black.sum() == 0

    def test_coincident_nodes_rejected(self):
        inst = Instance("dot", np.zeros((4, 2)))
        with pytest.raises(RenderError):
            render(inst, Tour([0, 1, 2, 3]))

    def test_box_restriction_drops_outside_nodes(self):
        full = decode_png(render(SQUARE, SQUARE_TOUR))
        opts = RenderOptions(box=BoxRegion(-10, 55, -10, 55))
        sub = decode_png(render(SQUARE, SQUARE_TOUR, opts))
        red_full = ((full[:, :, 0] > 180) & (full[:, :, 1] < 100)).sum()
        red_sub = ((sub[:, :, 0] > 180) & (sub[:, :, 1] < 100)).sum()
        assert red_sub < red_full  # only one corner survives the box

    def test_vertical_line_instance_still_renders(self):
        inst = Instance("line", np.array([(5.0, float(i)) for i in range(8)]))
        assert render(inst, Tour(list(range(8))))[:4] == b"\x89PNG"

    def test_mismatched_tour_rejected(self):
        with pytest.raises(ValueError):
            render(SQUARE, Tour([0, 1, 2]))


class TestViewport:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40)
    def test_world_pixel_round_trip_under_one_pixel(self, seed):
        rng = np.random.default_rng(seed)
        x0, y0 = rng.uniform(-1e5, 1e5, size=2)
        sx, sy = rng.uniform(1e-3, 1e6, size=2)
        lo = padded_bounds(x0, x0 + sx, y0, y0 + sy)
        view = Viewport(*lo, 1024, 1024, 80)
        for _ in range(5):
            x = rng.uniform(lo[0], lo[1])
            y = rng.uniform(lo[2], lo[3])
            px, py = view.to_pixel(x, y)
            bx, by = view.to_world(px, py)
            px2, py2 = view.to_pixel(bx, by)
            assert abs(px - px2) < 1.0 and abs(py - py2) < 1.0

    @given(st.integers(0, 2**32 - 1), st.integers(2, 60))
    @settings(max_examples=30)
    def test_every_node_inside_canvas(self, seed, n):
        inst = uniform_instance(n, seed, scale=float(seed % 7 + 1) * 137.0)
        bounds = padded_bounds(*inst.bounds())
        view = Viewport(*bounds, 1024, 1024, 80)
        for x, y in inst.coords:
            px, py = view.to_pixel(float(x), float(y))
            assert 80 <= px < 80 + 1024
            assert 0 <= py < 1024

    def test_padding_is_ten_percent(self):
        x_lo, x_hi, y_lo, y_hi = padded_bounds(0, 100, 50, 250)
        assert (x_lo, x_hi) == (-10.0, 110.0)
        assert (y_lo, y_hi) == (30.0, 270.0)

    def test_zero_area_rejected(self):
        with pytest.raises(RenderError):
            padded_bounds(5, 5, 7, 7)
