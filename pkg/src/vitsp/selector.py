"""Box-region selection policies: multimodal-model guided (with zoom-in and
merging), random boxes, random tour slices, and a roulette over policies."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace

import numpy as np

from .core import Instance, Tour, tour_length
from .render import RenderOptions, padded_bounds, render
from .subproblem import BoxRegion, Subproblem, extract_free_set

log = logging.getLogger(__name__)


class BoxParseError(ValueError):
    """No usable coordinate quadruple in a model response."""


@dataclass(frozen=True)
class TrajectoryEntry:
    """One solved selection: where, how many nodes, what it saved, how long."""

    box: BoxRegion
    node_count: int
    gain: int
    solver_time: float


@dataclass(frozen=True)
class SelectionContext:
    """Everything a prompt needs: current picture, padded bounds, memory."""

    image: bytes
    bounds: tuple[float, float, float, float]  # padded (x_lo, x_hi, y_lo, y_hi)
    trajectory: tuple[TrajectoryEntry, ...]
    pending: tuple[BoxRegion, ...]
    boxes_per_prompt: int
    node_cap: int

    def __post_init__(self) -> None:
        if self.boxes_per_prompt < 1 or self.node_cap < 1:
            raise ValueError("boxes_per_prompt and node_cap must be >= 1")


@dataclass(frozen=True)
class Proposal:
    """A selected region together with the subproblem it cuts out."""

    box: BoxRegion
    subproblem: Subproblem


TRAJECTORY_WINDOW = 50  # most recent entries shown in prompts
ZOOM_CAP = 8
PARSE_RETRIES = 2

_PROMPT_TEMPLATE = """You are tasked with improving an existing solution to a Traveling Salesman Problem (TSP) by selecting a sub-region where the routes can be significantly optimized. Carefully consider the locations of the nodes (in red) and connected routes (in black) in the initial solution on a map. The boundary of the map is x_min= {x_lo} , x_max= {x_hi} , y_min= {y_lo} , y_max= {y_hi} .

Please return {q} sub-rectangle(s) that you believe would most reduce total travel distance from further optimization by a downstream TSP solver. Analyze the problem to do meaningful selections. Remember, if you don't see significant improvement, try selecting larger areas that cover more nodes based on your analysis of the prior selection trajectory.

Keep your output very brief as in the following template. Don't tell me you cannot view or analyze the map. I don't want an excuse:
<coordinates> x_min=1,000 , x_max=2,000 , y_min=1,000 , y_max=2,000 </coordinates>

Avoid selecting the same regions as follows, which are pending optimization:
{pending}

Below are some previous selection trajectories. Please avoid selecting the same subrectangle:
{trajectory}
"""


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _box_text(box: BoxRegion) -> str:
    return (f"x_min={_fmt(box.x_min)} , x_max={_fmt(box.x_max)} , "
            f"y_min={_fmt(box.y_min)} , y_max={_fmt(box.y_max)}")


def _trajectory_text(entry: TrajectoryEntry) -> str:
    return (f"{_box_text(entry.box)}, number of nodes within the subrectangle= "
            f"{entry.node_count}, travel distance reduction= {entry.gain}, "
            f"computational time for this subproblem= {entry.solver_time:.2f}")


def build_prompt(ctx: SelectionContext) -> tuple[str, bytes]:
    """Instantiate the selection prompt; byte-stable for identical contexts."""
    x_lo, x_hi, y_lo, y_hi = ctx.bounds
    pending = "\n".join(_box_text(b) for b in ctx.pending)
    trajectory = "\n".join(_trajectory_text(e) for e in ctx.trajectory[-TRAJECTORY_WINDOW:])
    text = _PROMPT_TEMPLATE.format(
        x_lo=_fmt(x_lo), x_hi=_fmt(x_hi), y_lo=_fmt(y_lo), y_hi=_fmt(y_hi),
        q=ctx.boxes_per_prompt, pending=pending, trajectory=trajectory,
    )
    return text, ctx.image


_BLOCK_RE = re.compile(r"<\s*coordinates\s*>(.*?)</\s*coordinates\s*>",
                       re.IGNORECASE | re.DOTALL)
_NUM = r"(-?(?:\d[\d,]*)?\.?\d+(?:[eE][+-]?\d+)?)"
_FIELD_RE = {
    key: re.compile(rf"{key}\s*=\s*{_NUM}", re.IGNORECASE)
    for key in ("x_min", "x_max", "y_min", "y_max")
}


def parse_boxes(text: str, expected_q: int,
                bounds: tuple[float, float, float, float]) -> list[BoxRegion]:
    """Extract up to expected_q boxes from <coordinates> blocks.

    Tolerates digit-group commas, prose around blocks, and junk fields; boxes
    are clipped to the padded world bounds, and anything with non-positive
    area after clipping is dropped. Raises BoxParseError when nothing usable
    remains.
    """
    x_lo, x_hi, y_lo, y_hi = bounds
    boxes: list[BoxRegion] = []
    for block in _BLOCK_RE.findall(text or ""):
        values = {}
        for key, rx in _FIELD_RE.items():
            m = rx.search(block)
            if m is None:
                break
            try:
                values[key] = float(m.group(1).replace(",", ""))
            except ValueError:
                break
        if len(values) != 4:
            continue
        bx0 = max(values["x_min"], x_lo)
        bx1 = min(values["x_max"], x_hi)
        by0 = max(values["y_min"], y_lo)
        by1 = min(values["y_max"], y_hi)
        if bx0 >= bx1 or by0 >= by1:
            continue
        boxes.append(BoxRegion(bx0, bx1, by0, by1))
        if len(boxes) == expected_q:
            break
    if not boxes:
        raise BoxParseError("no parsable coordinate quadruple in response")
    return boxes


def _bounding_box(coords: np.ndarray, pad: float = 0.5) -> BoxRegion:
    x0, x1 = float(coords[:, 0].min()), float(coords[:, 0].max())
    y0, y1 = float(coords[:, 1].min()), float(coords[:, 1].max())
    if x1 - x0 <= 0:
        x0, x1 = x0 - pad, x1 + pad
    if y1 - y0 <= 0:
        y0, y1 = y0 - pad, y1 + pad
    return BoxRegion(x0, x1, y0, y1)


def _union_box(boxes: list[BoxRegion]) -> BoxRegion:
    return BoxRegion(
        min(b.x_min for b in boxes), max(b.x_max for b in boxes),
        min(b.y_min for b in boxes), max(b.y_max for b in boxes),
    )


def merge_or_split(inst: Instance, tour: Tour, picked: list[tuple[BoxRegion, np.ndarray]],
                   node_cap: int, origin_length: int) -> list[Proposal]:
    """Apply the too-small-or-overlapping rule to selected free-node sets.

    Merges everything into a single proposal when the union stays below the
    node cap or any two sets overlap; otherwise each selection stands alone.
    """
    masks = [mask for _, mask in picked]
    union = np.zeros(inst.n, dtype=bool)
    overlap = False
    for mask in masks:
        overlap = overlap or bool((union & mask).any())
        union |= mask
    if len(picked) > 1 and (int(union.sum()) <= node_cap or overlap):
        sp = extract_free_set(inst, tour, union, origin_length)
        return [Proposal(_union_box([b for b, _ in picked]), sp)]
    return [Proposal(box, extract_free_set(inst, tour, mask, origin_length))
            for box, mask in picked]


class VlmSelector:
    """Prompt a multimodal model for box regions, zooming into over-dense
    picks and merging per the selection rules."""

    def __init__(self, client, boxes_per_prompt: int = 2, node_cap: int = 1000,
                 render_opts: RenderOptions = RenderOptions(),
                 zoom_cap: int = ZOOM_CAP, retries: int = PARSE_RETRIES):
        self.client = client
        self.boxes_per_prompt = boxes_per_prompt
        self.node_cap = node_cap
        self.render_opts = render_opts
        self.zoom_cap = zoom_cap
        self.retries = retries

    def _ask(self, ctx: SelectionContext, expected_q: int) -> list[BoxRegion]:
        text, image = build_prompt(ctx)
        for attempt in range(1 + self.retries):
            reply = self.client.complete(text, image)
            try:
                return parse_boxes(reply, expected_q, ctx.bounds)
            except BoxParseError:
                log.info("unparsable selector reply (attempt %d)", attempt + 1)
        return []

    def propose(self, inst: Instance, tour: Tour,
                trajectory: tuple[TrajectoryEntry, ...],
                pending: tuple[BoxRegion, ...]) -> list[Proposal]:
        origin_length = tour_length(inst, tour)
        bounds = padded_bounds(*inst.bounds())
        try:
            image = render(inst, tour, self.render_opts)
            ctx = SelectionContext(image, bounds, trajectory, pending,
                                   self.boxes_per_prompt, self.node_cap)
            boxes = self._ask(ctx, self.boxes_per_prompt)
        except Exception:
            log.exception("selection round failed; proposing nothing")
            return []
        if not boxes:
            return []

        picked: list[tuple[BoxRegion, np.ndarray]] = []
        for box in boxes:
            mask = box.contains(inst.coords)
            zooms = 0
            while int(mask.sum()) > self.node_cap and zooms < self.zoom_cap:
                zooms += 1
                sub_bounds = padded_bounds(box.x_min, box.x_max, box.y_min, box.y_max)
                try:
                    sub_image = render(inst, tour, replace(self.render_opts, box=box))
                    sub_ctx = SelectionContext(sub_image, sub_bounds, trajectory,
                                               pending, 1, self.node_cap)
                    refined = self._ask(sub_ctx, 1)
                except Exception:
                    log.exception("zoom-in failed; keeping current box")
                    break
                if not refined:
                    break
                box = refined[0]
                mask = box.contains(inst.coords)
            count = int(mask.sum())
            if count > self.node_cap:
                # zoom gave up: keep the cap-nearest nodes around the center
                cx, cy = box.center()
                ids = np.nonzero(mask)[0]
                d = inst.coords[ids] - np.array([cx, cy])
                keep = ids[np.argsort(d[:, 0] ** 2 + d[:, 1] ** 2, kind="stable")[:self.node_cap]]
                mask = np.zeros(inst.n, dtype=bool)
                mask[keep] = True
            picked.append((box, mask))
        return merge_or_split(inst, tour, picked, self.node_cap, origin_length)


class RandomBoxSelector:
    """Uniform random rectangles in the padded bounds (ablation baseline)."""

    def __init__(self, boxes_per_prompt: int = 2, node_cap: int = 1000,
                 seed: int = 0, max_draws: int = 100):
        self.boxes_per_prompt = boxes_per_prompt
        self.node_cap = node_cap
        self.rng = np.random.default_rng(seed)
        self.max_draws = max_draws

    def propose(self, inst: Instance, tour: Tour,
                trajectory: tuple[TrajectoryEntry, ...],
                pending: tuple[BoxRegion, ...]) -> list[Proposal]:
        origin_length = tour_length(inst, tour)
        x_lo, x_hi, y_lo, y_hi = padded_bounds(*inst.bounds())
        picked: list[tuple[BoxRegion, np.ndarray]] = []
        for _ in range(self.boxes_per_prompt):
            for _ in range(self.max_draws):
                xs = np.sort(self.rng.uniform(x_lo, x_hi, size=2))
                ys = np.sort(self.rng.uniform(y_lo, y_hi, size=2))
                if xs[0] < xs[1] and ys[0] < ys[1]:
                    box = BoxRegion(float(xs[0]), float(xs[1]), float(ys[0]), float(ys[1]))
                    picked.append((box, box.contains(inst.coords)))
                    break
        if not picked:
            return []
        return merge_or_split(inst, tour, picked, self.node_cap, origin_length)


class RandomSequenceSelector:
    """Uniform random contiguous tour slice of a fixed length (ablation baseline)."""

    def __init__(self, length: int = 500, seed: int = 0):
        if length < 1:
            raise ValueError("slice length must be >= 1")
        self.length = length
        self.rng = np.random.default_rng(seed)

    def propose(self, inst: Instance, tour: Tour,
                trajectory: tuple[TrajectoryEntry, ...],
                pending: tuple[BoxRegion, ...]) -> list[Proposal]:
        n = inst.n
        if self.length >= n:
            raise ValueError(f"slice length {self.length} must be below n={n}")
        origin_length = tour_length(inst, tour)
        start = int(self.rng.integers(0, n))
        idx = [(start + t) % n for t in range(self.length)]
        free = tour.order[idx]
        mask = np.zeros(n, dtype=bool)
        mask[free] = True
        sp = extract_free_set(inst, tour, mask, origin_length)
        return [Proposal(_bounding_box(inst.coords[free]), sp)]


class WholeInstanceSelector:
    """Proposes the full padded bounding box every round (exactness harness)."""

    def propose(self, inst: Instance, tour: Tour,
                trajectory: tuple[TrajectoryEntry, ...],
                pending: tuple[BoxRegion, ...]) -> list[Proposal]:
        x_lo, x_hi, y_lo, y_hi = padded_bounds(*inst.bounds())
        box = BoxRegion(x_lo, x_hi, y_lo, y_hi)
        sp = extract_free_set(inst, tour, box.contains(inst.coords),
                              tour_length(inst, tour))
        return [Proposal(box, sp)]


class RouletteSelector:
    """Categorical draw over selectors, one draw per selection round."""

    def __init__(self, selectors, weights=None, seed: int = 0):
        selectors = list(selectors)
        if not selectors:
            raise ValueError("roulette needs at least one selector")
        if weights is None:
            weights = [1.0] * len(selectors)
        weights = np.asarray(list(weights), dtype=float)
        if weights.shape[0] != len(selectors) or (weights < 0).any() or weights.sum() <= 0:
            raise ValueError("weights must be non-negative and sum to a positive value")
        self.selectors = selectors
        self.p = weights / weights.sum()
        self.rng = np.random.default_rng(seed)

    def choose(self):
        return self.selectors[int(self.rng.choice(len(self.selectors), p=self.p))]

    def propose(self, inst, tour, trajectory, pending):
        return self.choose().propose(inst, tour, trajectory, pending)
