"""Pluggable matrix solvers behind one interface: exact dynamic programming,
time-limited local search, and an external-binary adapter."""

from __future__ import annotations

import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Tour
from .localsearch import WorkBudget, double_bridge, local_search
from .tsplib import ParseError, read_tour

_HK_MIN, _HK_MAX = 3, 18
_SENTINEL = np.int64(2**61)


class CapacityError(ValueError):
    """Matrix dimension outside what the exact solver can hold in memory."""


class SolverError(RuntimeError):
    """External solver crashed, timed out, or produced an unusable tour."""


@dataclass(frozen=True)
class AdapterConfig:
    """External solver invocation: argv with {tsp}/{tour} placeholders."""

    command: tuple[str, ...]
    timeout_s: float = 60.0
    work_dir: str | None = None


@dataclass(frozen=True)
class SubsolverConfig:
    """Dispatcher settings; ``mode`` is one of auto/exact/local/external."""

    mode: str = "auto"
    exact_cap: int = 14
    time_limit_s: float | None = 10.0
    seed: int = 0
    adapter: AdapterConfig | None = None
    max_steps: int | None = None
    neighbor_k: int = 10


@dataclass(frozen=True)
class SolveOutcome:
    tour: Tour  # over matrix indices
    cost: int
    proven_optimal: bool
    elapsed: float
    shift: int = 0  # per-entry shift applied for solvers that reject negatives


def _order_cost(d: np.ndarray, order: list[int]) -> int:
    total = 0
    prev = order[-1]
    for v in order:
        total += int(d[prev, v])
        prev = v
    return total


def tour_cost(d: np.ndarray, tour: Tour) -> int:
    """Exact integer cycle cost (accumulated in Python ints)."""
    return _order_cost(d, tour.order.tolist())


def held_karp(d: np.ndarray) -> SolveOutcome:
    """Provably optimal cycle via subset dynamic programming.

    Handles asymmetric matrices; dimension capped at 18 (memory grows as
    2^n * n).
    """
    t0 = time.monotonic()
    m = int(d.shape[0])
    if not _HK_MIN <= m <= _HK_MAX:
        raise CapacityError(f"dimension {m} outside {_HK_MIN}..{_HK_MAX}")
    r = m - 1  # nodes 1..m-1; node 0 is the fixed start
    size = 1 << r
    dp = np.full((size, r), _SENTINEL, dtype=np.int64)
    parent = np.full((size, r), -1, dtype=np.int8)
    inner = d[1:, 1:].astype(np.int64)
    for j in range(r):
        dp[1 << j, j] = d[0, j + 1]
    for mask in range(1, size):
        row = dp[mask]
        valid = row < _SENTINEL
        if not valid.any():
            continue
        # mask unreached states: negative entries could otherwise drag a
        # sentinel-based pseudo-path below a real one
        cand = np.where(valid[:, None], row[:, None] + inner, _SENTINEL)
        best = cand.min(axis=0)
        arg = cand.argmin(axis=0)
        for t in range(r):
            bit = 1 << t
            if mask & bit:
                continue
            nxt = mask | bit
            if best[t] < dp[nxt, t]:
                dp[nxt, t] = best[t]
                parent[nxt, t] = arg[t]
    full = size - 1
    closing = dp[full] + d[1:, 0]
    last = int(np.argmin(closing))
    cost = int(closing[last])
    order = [0]
    mask, j = full, last
    chain = []
    while j >= 0:
        chain.append(j + 1)
        pj = int(parent[mask, j])
        mask ^= 1 << j
        j = pj
    order.extend(reversed(chain))
    tour = Tour(np.asarray(order, dtype=np.int64))
    assert tour_cost(d, tour) == cost
    return SolveOutcome(tour, cost, proven_optimal=True, elapsed=time.monotonic() - t0)


def matrix_neighbors(d: np.ndarray, k: int) -> list[np.ndarray]:
    """k nearest candidates per row, ascending by entry value, self excluded."""
    m = d.shape[0]
    k = min(k, m - 1)
    ranked = np.argsort(d, axis=1, kind="stable")
    out = []
    for i in range(m):
        row = ranked[i]
        out.append(row[row != i][:k])
    return out


def local_solve(d: np.ndarray, warm: Tour, time_limit: float | None = 10.0,
                seed: int = 0, max_steps: int | None = None,
                neighbor_k: int = 10, max_idle_kicks: int = 12) -> SolveOutcome:
    """2-opt + Or-opt descent with don't-look bits from a warm tour.

    When budget remains after the first descent, spends it on iterated
    descent (double-bridge perturbations of the incumbent), which escapes
    local optima the plain move set cannot; the kick loop quits after
    ``max_idle_kicks`` fruitless perturbations in a row. Returns the best
    incumbent at the limit; never worse than the warm tour. Deterministic
    for step-based budgets.
    """
    t0 = time.monotonic()
    m = int(d.shape[0])
    if warm.n != m:
        raise ValueError(f"warm tour covers {warm.n} nodes, matrix has {m}")
    if m < 4:
        return SolveOutcome(warm, tour_cost(d, warm), False, time.monotonic() - t0)
    neighbors = matrix_neighbors(d, neighbor_k)
    budget = WorkBudget(
        deadline=None if time_limit is None else t0 + time_limit,
        max_steps=max_steps,
    )
    dist = lambda i, j: int(d[i, j])  # noqa: E731
    best = local_search(warm.order, dist, neighbors, budget=budget,
                        dont_look=True, start_offset=seed % m)
    best_cost = _order_cost(d, best)
    if budget.bounded and m >= 8:
        rng = np.random.default_rng(seed)
        idle = 0
        while idle < max_idle_kicks and not budget.exhausted():
            kicked = double_bridge(best, rng)
            cand = local_search(kicked, dist, neighbors, budget=budget, dont_look=True)
            cost = _order_cost(d, cand)
            if cost < best_cost:
                best, best_cost = cand, cost
                idle = 0
            else:
                idle += 1
    tour = Tour(np.asarray(best, dtype=np.int64))
    assert best_cost <= tour_cost(d, warm)
    return SolveOutcome(tour, best_cost, proven_optimal=False, elapsed=time.monotonic() - t0)


def write_explicit_matrix(d: np.ndarray, name: str = "sub") -> str:
    """TSPLIB EXPLICIT FULL_MATRIX serialization of a square integer matrix."""
    m = d.shape[0]
    lines = [
        f"NAME: {name}",
        "TYPE: TSP",
        f"DIMENSION: {m}",
        "EDGE_WEIGHT_TYPE: EXPLICIT",
        "EDGE_WEIGHT_FORMAT: FULL_MATRIX",
        "EDGE_WEIGHT_SECTION",
    ]
    lines.extend(" ".join(str(int(v)) for v in row) for row in d)
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def external_solve(d: np.ndarray, time_limit: float | None,
                   adapter: AdapterConfig) -> SolveOutcome:
    """Ship the matrix to an external program and parse the tour it writes.

    Negative entries are lifted by a global per-entry shift (adds a constant
    dim * shift to every cycle, so the ranking is unchanged); the reported
    cost is over the original matrix.
    """
    t0 = time.monotonic()
    m = int(d.shape[0])
    shift = max(0, -int(d.min()))
    shipped = d + shift if shift else d
    timeout = adapter.timeout_s if time_limit is None else min(adapter.timeout_s, time_limit)
    with tempfile.TemporaryDirectory(dir=adapter.work_dir) as tmp:
        tsp_path = Path(tmp) / "sub.tsp"
        tour_path = Path(tmp) / "sub.tour"
        tsp_path.write_text(write_explicit_matrix(shipped), encoding="utf-8")
        argv = [arg.format(tsp=str(tsp_path), tour=str(tour_path)) for arg in adapter.command]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            raise SolverError(f"external solver timed out after {timeout}s") from exc
        except OSError as exc:
            raise SolverError(f"external solver failed to start: {exc}") from exc
        if proc.returncode != 0:
            raise SolverError(f"external solver exited {proc.returncode}: {proc.stderr.strip()[:500]}")
        try:
            tour = read_tour(tour_path.read_text(encoding="utf-8"), n=m)
        except (OSError, ParseError) as exc:
            raise SolverError(f"external solver wrote an unusable tour: {exc}") from exc
    return SolveOutcome(tour, tour_cost(d, tour), proven_optimal=False,
                        elapsed=time.monotonic() - t0, shift=shift)


def choose(d: np.ndarray, warm: Tour, cfg: SubsolverConfig) -> SolveOutcome:
    """Route to exact, external, or local solving per configuration."""
    m = int(d.shape[0])
    if cfg.mode == "exact":
        return held_karp(d)
    if cfg.mode == "external":
        if cfg.adapter is None:
            raise SolverError("external mode requires an adapter configuration")
        return external_solve(d, cfg.time_limit_s, cfg.adapter)
    if cfg.mode == "local":
        return local_solve(d, warm, cfg.time_limit_s, cfg.seed, cfg.max_steps, cfg.neighbor_k)
    if cfg.mode != "auto":
        raise ValueError(f"unknown subsolver mode {cfg.mode!r}")
    if m <= cfg.exact_cap:
        return held_karp(d)
    if cfg.adapter is not None:
        return external_solve(d, cfg.time_limit_s, cfg.adapter)
    return local_solve(d, warm, cfg.time_limit_s, cfg.seed, cfg.max_steps, cfg.neighbor_k)
