"""First-improvement 2-opt + Or-opt descent over a pluggable integer metric.

One engine backs both tour polishing (coordinate metric, plain tour-order
scans) and the matrix subsolver (don't-look bits). The metric is any
``dist(i, j) -> int`` callable; neighbor lists are ascending-by-distance
candidate arrays.
"""

from __future__ import annotations

import time
from collections import deque
from typing import Callable, Sequence


class WorkBudget:
    """Shared work meter: an optional wall deadline and/or step allowance.

    Step accounting makes truncation deterministic where wall clocks are not;
    both limits may be None (unbounded).
    """

    def __init__(self, deadline: float | None = None, max_steps: int | None = None):
        self.deadline = deadline
        self.remaining = max_steps

    @property
    def bounded(self) -> bool:
        return self.deadline is not None or self.remaining is not None

    def spend(self, n: int = 1) -> None:
        if self.remaining is not None:
            self.remaining -= n

    def exhausted(self) -> bool:
        if self.remaining is not None and self.remaining <= 0:
            return True
        return self.deadline is not None and time.monotonic() >= self.deadline


def _reverse_segment(tour: list[int], pos: list[int], n: int, i: int, j: int) -> None:
    """Reverse cyclic positions i+1..j, flipping the shorter arc."""
    lo, hi = (i + 1) % n, j
    count = (hi - lo) % n + 1
    if count > n - count:
        lo, hi = (j + 1) % n, i
        count = n - count
    for t in range(count // 2):
        pi, pj = (lo + t) % n, (hi - t) % n
        tour[pi], tour[pj] = tour[pj], tour[pi]
        pos[tour[pi]] = pi
        pos[tour[pj]] = pj


class _Search:
    def __init__(self, order: Sequence[int], dist: Callable[[int, int], int],
                 neighbors: Sequence[Sequence[int]], or_opt_lengths: tuple[int, ...]):
        self.tour = [int(v) for v in order]
        self.n = len(self.tour)
        self.pos = [0] * self.n
        for i, v in enumerate(self.tour):
            self.pos[v] = i
        self.dist = dist
        self.neighbors = neighbors
        self.or_opt_lengths = or_opt_lengths

    def _two_opt_from(self, a: int) -> tuple[int, ...] | None:
        tour, pos, n, dist = self.tour, self.pos, self.n, self.dist
        i = pos[a]
        b = tour[(i + 1) % n]
        d_ab = dist(a, b)
        for c in self.neighbors[a]:
            if c == b or c == a:
                continue
            d_ac = dist(a, c)
            if d_ac >= d_ab:
                break  # neighbors ascend; no closer candidate follows
            j = pos[c]
            d_node = tour[(j + 1) % n]
            if d_node == a:
                continue
            gain = d_ab + dist(c, d_node) - d_ac - dist(b, d_node)
            if gain > 0:
                _reverse_segment(tour, pos, n, i, j)
                return (a, b, c, d_node)
        # mirrored direction: replace the predecessor edge (p, a)
        p = tour[(i - 1) % n]
        d_pa = dist(p, a)
        for c in self.neighbors[a]:
            if c == p or c == a:
                continue
            d_ac = dist(a, c)
            if d_ac >= d_pa:
                break
            j = pos[c]
            w = tour[(j - 1) % n]
            if w == a:
                continue
            gain = d_pa + dist(w, c) - d_ac - dist(p, w)
            if gain > 0:
                _reverse_segment(tour, pos, n, (j - 1) % n, (i - 1) % n)
                return (a, p, c, w)
        return None

    def _or_opt_from(self, a: int) -> tuple[int, ...] | None:
        tour, pos, n, dist = self.tour, self.pos, self.n, self.dist
        for length in self.or_opt_lengths:
            if n - length < 3:
                continue
            si = pos[a]
            seg = [tour[(si + t) % n] for t in range(length)]
            segset = set(seg)
            p = tour[(si - 1) % n]
            q = tour[(si + length) % n]
            removal = dist(p, seg[0]) + dist(seg[-1], q) - dist(p, q)
            if removal <= 0:
                continue
            for c in list(self.neighbors[seg[0]]) + list(self.neighbors[seg[-1]]):
                if c in segset:
                    continue
                e = tour[(pos[c] + 1) % n]
                if e in segset:
                    continue
                d_ce = dist(c, e)
                fwd = dist(c, seg[0]) + dist(seg[-1], e) - d_ce
                rev = dist(c, seg[-1]) + dist(seg[0], e) - d_ce
                cost, flip = (fwd, False) if fwd <= rev else (rev, True)
                if removal - cost > 0:
                    self._apply_or_opt(si, length, c, flip)
                    return (p, q, c, e, *seg)
        return None

    def _apply_or_opt(self, si: int, length: int, c: int, flip: bool) -> None:
        tour, pos, n = self.tour, self.pos, self.n
        seg = [tour[(si + t) % n] for t in range(length)]
        rest = [tour[(si + length + t) % n] for t in range(n - length)]
        if flip:
            seg.reverse()
        k = rest.index(c)
        new = rest[:k + 1] + seg + rest[k + 1:]
        tour[:] = new
        for idx, v in enumerate(new):
            pos[v] = idx

    def improve_node(self, a: int) -> tuple[int, ...] | None:
        hit = self._two_opt_from(a)
        if hit is not None:
            return hit
        return self._or_opt_from(a)


def double_bridge(order: Sequence[int], rng) -> list[int]:
    """Classic 4-segment reconnection; escapes 2-opt/Or-opt local optima."""
    n = len(order)
    a, b, c = sorted(int(v) for v in rng.integers(1, n, size=3))
    if a == b or b == c:
        return list(order)
    lst = list(order)
    return lst[:a] + lst[b:c] + lst[a:b] + lst[c:]


def local_search(order: Sequence[int], dist: Callable[[int, int], int],
                 neighbors: Sequence[Sequence[int]], *,
                 budget: WorkBudget | None = None,
                 max_passes: int | None = None,
                 dont_look: bool = True,
                 start_offset: int = 0,
                 or_opt_lengths: tuple[int, ...] = (1, 2, 3)) -> list[int]:
    """Descend until a local optimum or until the work budget runs out.

    Never returns a worse order than the input (first-improvement moves
    only); deterministic for fixed inputs when the budget is step-based or
    absent.
    """
    s = _Search(order, dist, neighbors, or_opt_lengths)
    n = s.n
    if n < 4:
        return list(s.tour)
    if budget is None:
        budget = WorkBudget()
    scan = [(start_offset + t) % n for t in range(n)]

    if dont_look:
        active = deque(s.tour[i] for i in scan)
        queued = [True] * n
        while active:
            if budget.exhausted():
                break
            budget.spend()
            a = active.popleft()
            queued[a] = False
            touched = s.improve_node(a)
            if touched is not None:
                for v in touched:
                    if not queued[v]:
                        queued[v] = True
                        active.append(v)
                if not queued[a]:
                    queued[a] = True
                    active.append(a)
        return list(s.tour)

    passes = 0
    while True:
        improved = False
        for t in scan:
            if budget.exhausted():
                return list(s.tour)
            budget.spend()
            a = s.tour[t % n]
            if s.improve_node(a) is not None:
                improved = True
        passes += 1
        if not improved or budget.exhausted():
            break
        if max_passes is not None and passes >= max_passes:
            break
    return list(s.tour)
