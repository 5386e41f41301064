"""Tour initialization: farthest insertion, budgeted polishing, and an
adapter for external warm-start programs."""

from __future__ import annotations

import math
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Instance, Tour, distance_row, pair_weights, tour_length
from .localsearch import WorkBudget, local_search
from .tsplib import ParseError, read_tour, serialize_instance


class InitializerError(RuntimeError):
    """External initializer failed; callers fall back to the built-in one."""


@dataclass(frozen=True)
class InitializerConfig:
    """External warm-start program: argv with {tsp}/{tour} placeholders."""

    command: tuple[str, ...]
    timeout_s: float = 300.0
    work_dir: str | None = None


def farthest_insertion(inst: Instance, seed: int = 0) -> Tour:
    """Grow a tour by inserting the node farthest from it at its cheapest slot.

    Deterministic: the seed picks the starting node, ties break on lowest index.
    """
    n = inst.n
    if n < 3:
        raise ValueError(f"need at least 3 nodes, instance has {n}")
    start = seed % n
    min_to_tour = distance_row(inst, start)
    in_tour = np.zeros(n, dtype=bool)
    in_tour[start] = True
    min_to_tour[start] = -1
    far = int(np.argmax(min_to_tour))
    tour = [start, far]
    in_tour[far] = True
    np.minimum(min_to_tour, distance_row(inst, far), out=min_to_tour)
    min_to_tour[far] = -1

    while len(tour) < n:
        x = int(np.argmax(min_to_tour))
        tarr = np.asarray(tour, dtype=np.int64)
        nxt = np.roll(tarr, -1)
        dx = distance_row(inst, x)[tarr]
        cost = dx + np.roll(dx, -1) - pair_weights(inst, tarr, nxt)
        at = int(np.argmin(cost))
        tour.insert(at + 1, x)
        in_tour[x] = True
        np.minimum(min_to_tour, distance_row(inst, x), out=min_to_tour)
        min_to_tour[x] = -1
    return Tour(np.asarray(tour, dtype=np.int64))


def grid_neighbor_lists(inst: Instance, k: int = 10) -> list[np.ndarray]:
    """k-nearest candidate lists via uniform grid bucketing (expected O(n))."""
    n = inst.n
    k = min(k, n - 1)
    coords = inst.coords
    x_min, x_max, y_min, y_max = inst.bounds()
    span_x = max(x_max - x_min, 1e-12)
    span_y = max(y_max - y_min, 1e-12)
    cells_per_axis = max(1, int(math.sqrt(n)))
    cx = np.minimum((coords[:, 0] - x_min) / span_x * cells_per_axis, cells_per_axis - 1).astype(np.int64)
    cy = np.minimum((coords[:, 1] - y_min) / span_y * cells_per_axis, cells_per_axis - 1).astype(np.int64)
    buckets: dict[tuple[int, int], list[int]] = {}
    for i in range(n):
        buckets.setdefault((int(cx[i]), int(cy[i])), []).append(i)

    out: list[np.ndarray] = []
    for i in range(n):
        gx, gy = int(cx[i]), int(cy[i])
        cand: list[int] = []
        ring = 0
        # one extra ring after enough candidates, so near-boundary nodes
        # cannot miss a closer point sitting one cell further out
        while True:
            if ring == 0:
                cand.extend(buckets.get((gx, gy), ()))
            else:
                for ox in range(-ring, ring + 1):
                    for oy in (-ring, ring):
                        cand.extend(buckets.get((gx + ox, gy + oy), ()))
                for oy in range(-ring + 1, ring):
                    for ox in (-ring, ring):
                        cand.extend(buckets.get((gx + ox, gy + oy), ()))
            if len(cand) > k or ring > cells_per_axis:
                break
            ring += 1
        for ox in range(-ring - 1, ring + 2):
            for oy in (-ring - 1, ring + 1):
                cand.extend(buckets.get((gx + ox, gy + oy), ()))
        for oy in range(-ring, ring + 1):
            for ox in (-ring - 1, ring + 1):
                cand.extend(buckets.get((gx + ox, gy + oy), ()))
        arr = np.asarray([c for c in cand if c != i], dtype=np.int64)
        d = inst.coords[arr] - coords[i]
        sq = d[:, 0] ** 2 + d[:, 1] ** 2
        ranked = arr[np.argsort(sq, kind="stable")]
        out.append(ranked[:k])
    return out


def _metric(inst: Instance):
    coords = inst.coords
    kind = inst.weight_kind
    if kind == "ATT":
        def dist(i: int, j: int) -> int:
            dx = coords[i, 0] - coords[j, 0]
            dy = coords[i, 1] - coords[j, 1]
            r = math.sqrt((dx * dx + dy * dy) / 10.0)
            t = math.floor(r + 0.5)
            return int(t if t >= r else t + 1)
        return dist
    if kind == "CEIL_2D":
        def dist(i: int, j: int) -> int:
            dx = coords[i, 0] - coords[j, 0]
            dy = coords[i, 1] - coords[j, 1]
            return int(math.ceil(math.sqrt(dx * dx + dy * dy)))
        return dist

    def dist(i: int, j: int) -> int:
        dx = coords[i, 0] - coords[j, 0]
        dy = coords[i, 1] - coords[j, 1]
        return int(math.floor(math.sqrt(dx * dx + dy * dy) + 0.5))
    return dist


def polish(inst: Instance, tour: Tour, time_budget_s: float | None = 5.0,
           seed: int = 0, neighbor_k: int = 10,
           max_passes: int | None = None) -> Tour:
    """Budgeted 2-opt + Or-opt cleanup with grid-built neighbor candidates.

    First-improvement, tour-order scans; stops at the budget or a local
    optimum. The result is never longer than the input.
    """
    if inst.n < 4:
        return tour
    deadline = None if time_budget_s is None else time.monotonic() + time_budget_s
    neighbors = grid_neighbor_lists(inst, neighbor_k)
    order = local_search(
        tour.order, _metric(inst), neighbors,
        budget=WorkBudget(deadline=deadline), max_passes=max_passes, dont_look=False,
        start_offset=seed % inst.n,
    )
    polished = Tour(np.asarray(order, dtype=np.int64))
    assert tour_length(inst, polished) <= tour_length(inst, tour)
    return polished


def external_initializer(inst: Instance, cfg: InitializerConfig) -> Tour:
    """Run a configured program on a serialized instance and load its tour."""
    with tempfile.TemporaryDirectory(dir=cfg.work_dir) as tmp:
        tsp_path = Path(tmp) / f"{inst.name or 'instance'}.tsp"
        tour_path = Path(tmp) / "init.tour"
        tsp_path.write_text(serialize_instance(inst), encoding="utf-8")
        argv = [arg.format(tsp=str(tsp_path), tour=str(tour_path)) for arg in cfg.command]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=cfg.timeout_s)
        except subprocess.TimeoutExpired as exc:
            raise InitializerError(f"initializer timed out after {cfg.timeout_s}s") from exc
        except OSError as exc:
            raise InitializerError(f"initializer failed to start: {exc}") from exc
        if proc.returncode != 0:
            raise InitializerError(f"initializer exited {proc.returncode}: {proc.stderr.strip()[:500]}")
        try:
            return read_tour(tour_path.read_text(encoding="utf-8"), n=inst.n)
        except (OSError, ParseError) as exc:
            raise InitializerError(f"initializer wrote an unusable tour: {exc}") from exc
