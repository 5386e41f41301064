"""Problem and solution primitives: instances, tours, integer edge weights, gaps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Edge-weight conventions this package understands (TSPLIB spellings).
WEIGHT_KINDS = ("EUC_2D", "CEIL_2D", "ATT")


class ValidationError(ValueError):
    """An instance or tour violates a structural invariant."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable problem: named 2-d coordinates plus an edge-weight convention."""

    name: str
    coords: np.ndarray  # shape (n, 2), float64
    weight_kind: str = "EUC_2D"

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 1:
            raise ValidationError(f"coords must have shape (n, 2) with n >= 1, got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValidationError("coordinates must be finite")
        if self.weight_kind not in WEIGHT_KINDS:
            raise ValidationError(f"unsupported weight kind {self.weight_kind!r}")
        object.__setattr__(self, "coords", _readonly(coords))

    @property
    def n(self) -> int:
        return int(self.coords.shape[0])

    def bounds(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) of the raw coordinates."""
        xs, ys = self.coords[:, 0], self.coords[:, 1]
        return float(xs.min()), float(xs.max()), float(ys.min()), float(ys.max())


@dataclass(frozen=True, eq=False)
class Tour:
    """Cyclic visiting order: a permutation of 0..n-1, implicitly closed."""

    order: np.ndarray

    def __post_init__(self) -> None:
        order = np.asarray(self.order, dtype=np.int64)
        if order.ndim != 1 or order.size < 1:
            raise ValidationError("tour order must be a non-empty 1-d sequence")
        n = order.size
        if order.min() < 0 or order.max() >= n:
            raise ValidationError("tour visits a node outside 0..n-1")
        seen = np.zeros(n, dtype=bool)
        seen[order] = True
        if not seen.all():
            raise ValidationError("tour is not a permutation: node repeated or missing")
        object.__setattr__(self, "order", _readonly(order))

    @property
    def n(self) -> int:
        return int(self.order.size)

    def canonical(self) -> "Tour":
        """Rotate node 0 to the front, then orient so the second node is smaller.

        Makes tours comparable independent of start position and direction.
        """
        order = self.order
        start = int(np.nonzero(order == 0)[0][0])
        fwd = np.roll(order, -start)
        if fwd.size >= 3 and fwd[-1] < fwd[1]:
            fwd = np.roll(fwd[::-1], 1)
        return Tour(fwd)

    def key(self) -> tuple[int, ...]:
        """Hashable canonical form, for golden comparisons."""
        return tuple(int(v) for v in self.canonical().order)


@dataclass(frozen=True)
class GapReport:
    """Tour length against a proven optimum, as a percentage gap."""

    model_length: int
    optimum_length: int
    gap_percent: float


def _weights_from_sq(sq: np.ndarray, kind: str) -> np.ndarray:
    """Integer weights from squared Euclidean distances, per convention.

    Uses sqrt on the exact squared distance (not hypot) so results are
    bit-stable across platforms; EUC_2D rounds half-up like TSPLIB's nint.
    """
    if kind == "ATT":
        r = np.sqrt(sq / 10.0)
        t = np.floor(r + 0.5)
        return (t + (t < r)).astype(np.int64)
    d = np.sqrt(sq)
    if kind == "CEIL_2D":
        return np.ceil(d).astype(np.int64)
    return np.floor(d + 0.5).astype(np.int64)


def distance(inst: Instance, i: int, j: int) -> int:
    """Integer edge weight between nodes i and j."""
    xi, yi = inst.coords[i]
    xj, yj = inst.coords[j]
    dx = xi - xj
    dy = yi - yj
    sq = dx * dx + dy * dy
    if inst.weight_kind == "ATT":
        r = math.sqrt(sq / 10.0)
        t = math.floor(r + 0.5)
        return int(t if t >= r else t + 1)
    d = math.sqrt(sq)
    if inst.weight_kind == "CEIL_2D":
        return int(math.ceil(d))
    return int(math.floor(d + 0.5))


def distance_row(inst: Instance, i: int) -> np.ndarray:
    """Integer weights from node i to every node, as an int64 vector."""
    d = inst.coords - inst.coords[i]
    sq = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]
    return _weights_from_sq(sq, inst.weight_kind)


def weight_matrix(inst: Instance, rows, cols) -> np.ndarray:
    """Integer weight block between two node index lists (len(rows) x len(cols))."""
    pa = inst.coords[np.asarray(rows, dtype=np.int64)]
    pb = inst.coords[np.asarray(cols, dtype=np.int64)]
    dx = pa[:, None, 0] - pb[None, :, 0]
    dy = pa[:, None, 1] - pb[None, :, 1]
    return _weights_from_sq(dx * dx + dy * dy, inst.weight_kind)


def pair_weights(inst: Instance, a, b) -> np.ndarray:
    """Elementwise integer weights d(a_i, b_i) for two equal-length node vectors."""
    pa = inst.coords[np.asarray(a, dtype=np.int64)]
    pb = inst.coords[np.asarray(b, dtype=np.int64)]
    dx = pa[:, 0] - pb[:, 0]
    dy = pa[:, 1] - pb[:, 1]
    return _weights_from_sq(dx * dx + dy * dy, inst.weight_kind)


def tour_length(inst: Instance, tour: Tour) -> int:
    """Total integer length of the closed tour."""
    if tour.n != inst.n:
        raise ValidationError(f"tour has {tour.n} nodes, instance has {inst.n}")
    pts = inst.coords[tour.order]
    nxt = np.roll(pts, -1, axis=0)
    dx = pts[:, 0] - nxt[:, 0]
    dy = pts[:, 1] - nxt[:, 1]
    return int(_weights_from_sq(dx * dx + dy * dy, inst.weight_kind).sum())


def gap(model_length: int, optimum_length: int) -> GapReport:
    """Optimality gap in percent: 100 * (model - optimum) / optimum."""
    if optimum_length <= 0:
        raise ValueError(f"optimum length must be positive, got {optimum_length}")
    pct = 100.0 * (model_length - optimum_length) / optimum_length
    return GapReport(int(model_length), int(optimum_length), pct)


def uniform_instance(n: int, seed: int, scale: float = 10000.0, name: str | None = None) -> Instance:
    """Seeded instance with nodes uniform in a square; handy for experiments."""
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, scale, size=(n, 2))
    return Instance(name or f"uniform{n}-s{seed}", coords, "EUC_2D")
