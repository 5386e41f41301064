"""Box extraction into free nodes + fixed segments, block-matrix reformulation,
solution recovery, and hill-climbing splice.

A rectangular region cuts the current tour into free nodes (inside, all
connections dropped) and maximal runs of outside nodes whose internal edges
are frozen. Each run is aggregated into a super node, giving a partially
asymmetric problem; a dummy node per super node with a dominant negative
pairing weight turns that into a symmetric one that standard solvers accept.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import Instance, Tour, tour_length, weight_matrix

#: Hard ceiling keeping matrix entries (and small sums over them) inside int64.
_ENTRY_CAP = 2**60


class DegenerateSubproblemError(ValueError):
    """Subproblem too small to reformulate; callers skip it."""


class RecoveryError(ValueError):
    """Solved tour violates the dummy-adjacency structure of the transform."""


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned rectangle in instance coordinates."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"box must have positive area, got {self}")

    def contains(self, coords: np.ndarray) -> np.ndarray:
        """Boolean membership mask over an (n, 2) coordinate array; edges count as inside."""
        x, y = coords[:, 0], coords[:, 1]
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)

    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))


@dataclass(frozen=True)
class Subproblem:
    """Free nodes (tour order) plus ordered fixed segments cut from a tour.

    ``walk`` records how frees and segments interleaved along the source tour
    (index j >= 0 is free node j, -(k+1) is segment k); it reconstructs the
    source tour's encoding for warm starts.
    """

    free_nodes: tuple[int, ...]
    segments: tuple[tuple[int, ...], ...]
    origin_length: int
    walk: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        seen: set[int] = set(self.free_nodes)
        total = len(self.free_nodes)
        if len(seen) != total:
            raise ValueError("free nodes repeat")
        for seg in self.segments:
            if not seg:
                raise ValueError("empty segment")
            total += len(seg)
            seen.update(seg)
        if len(seen) != total or seen != set(range(total)):
            raise ValueError("free nodes and segments must partition 0..n-1")
        walk = self.walk
        if not walk:
            walk = tuple(range(len(self.free_nodes))) + tuple(
                -(k + 1) for k in range(len(self.segments)))
            object.__setattr__(self, "walk", walk)
        expected = set(range(len(self.free_nodes))) | {-(k + 1) for k in range(len(self.segments))}
        if len(walk) != len(expected) or set(walk) != expected:
            raise ValueError("walk must mention each free node and segment exactly once")

    @property
    def n(self) -> int:
        return len(self.free_nodes) + sum(len(s) for s in self.segments)


@dataclass(frozen=True)
class BlockMatrices:
    """Aggregated distance matrices with dummy-node layout bookkeeping.

    ``d_atsp`` is (k+w)^2 over node order (super nodes, free nodes); ``d_stsp``
    is (w+2k)^2 over (super nodes, free nodes, dummies). ``offset`` satisfies
    optimal ATSP cost = optimal STSP cost - offset, i.e. offset = k * neg_m
    (non-positive, since every forced super/dummy pairing contributes neg_m).
    """

    d_atsp: np.ndarray
    d_stsp: np.ndarray | None
    n_segments: int
    n_free: int
    big_m: int = 0
    neg_m: int = 0
    offset: int = 0

    @property
    def stsp_dim(self) -> int:
        return self.n_free + 2 * self.n_segments


def extract_free_set(inst: Instance, tour: Tour, free_mask: np.ndarray,
                     origin_length: int | None = None) -> Subproblem:
    """Cut the tour along an arbitrary free-node mask (indexed by node id)."""
    order = tour.order
    n = order.size
    if origin_length is None:
        origin_length = tour_length(inst, tour)
    pos_free = free_mask[order]
    if pos_free.all():
        return Subproblem(tuple(int(v) for v in order), (), origin_length)
    if not pos_free.any():
        return Subproblem((), (tuple(int(v) for v in order),), origin_length)

    first_free = int(np.argmax(pos_free))
    rot = np.roll(order, -first_free)
    rot_free = np.roll(pos_free, -first_free)
    free: list[int] = []
    segments: list[tuple[int, ...]] = []
    walk: list[int] = []
    i = 0
    while i < n:
        if rot_free[i]:
            walk.append(len(free))
            free.append(int(rot[i]))
            i += 1
        else:
            j = i
            while j < n and not rot_free[j]:
                j += 1
            walk.append(-(len(segments) + 1))
            segments.append(tuple(int(v) for v in rot[i:j]))
            i = j
    return Subproblem(tuple(free), tuple(segments), origin_length, tuple(walk))


def extract(inst: Instance, tour: Tour, box: BoxRegion,
            origin_length: int | None = None) -> Subproblem:
    """Cut the tour along a box: inside nodes become free, outside runs freeze."""
    return extract_free_set(inst, tour, box.contains(inst.coords), origin_length)


def build_atsp(inst: Instance, sp: Subproblem) -> BlockMatrices:
    """Aggregate segments into super nodes and assemble the asymmetric matrix.

    Layout: indices 0..k-1 are super nodes (row = leave from segment end,
    column = arrive at segment start), k..k+w-1 are free nodes.
    """
    k, w = len(sp.segments), len(sp.free_nodes)
    m = k + w
    if m < 3:
        raise DegenerateSubproblemError(f"only {m} aggregated nodes; need >= 3")
    d = np.zeros((m, m), dtype=np.int64)
    free = list(sp.free_nodes)
    if k:
        starts = [seg[0] for seg in sp.segments]
        ends = [seg[-1] for seg in sp.segments]
        d[:k, :k] = weight_matrix(inst, ends, starts)
        np.fill_diagonal(d[:k, :k], 0)
        if w:
            d[:k, k:] = weight_matrix(inst, ends, free)
            d[k:, :k] = weight_matrix(inst, free, starts)
    if w:
        d[k:, k:] = weight_matrix(inst, free, free)
    return BlockMatrices(d_atsp=d, d_stsp=None, n_segments=k, n_free=w)


def atsp_to_stsp(bm: BlockMatrices) -> BlockMatrices:
    """Add one dummy per super node and assemble the symmetric matrix.

    The dummy carries its super node's outgoing arcs; the super node keeps the
    incoming ones. The pairing edge weight neg_m is more negative than the sum
    of all finite entries, so every optimal symmetric tour keeps each pair
    adjacent; big_m prices unusable edges above any pairing-respecting tour.
    """
    k, w = bm.n_segments, bm.n_free
    a = bm.d_atsp
    if k == 0:
        return replace(bm, d_stsp=a.copy(), big_m=0, neg_m=0, offset=0)

    dim = w + 2 * k
    neg_m = -min(int(np.abs(a).sum()) + 1, _ENTRY_CAP)
    big_m = min(dim * int(a.max()) + k * (-neg_m) + 1, _ENTRY_CAP)

    d_kk = a[:k, :k]
    d_kw = a[:k, k:]  # segment end -> free
    d_wk = a[k:, :k]  # free -> segment start
    d_ww = a[k:, k:]

    d_hat = d_kk.copy()
    np.fill_diagonal(d_hat, neg_m)

    s = np.empty((dim, dim), dtype=np.int64)
    sup = slice(0, k)
    fre = slice(k, k + w)
    dum = slice(k + w, dim)
    s[sup, sup] = big_m
    s[dum, dum] = big_m
    s[sup, fre] = d_wk.T
    s[fre, sup] = d_wk
    s[sup, dum] = d_hat.T
    s[dum, sup] = d_hat
    s[fre, fre] = d_ww
    s[fre, dum] = d_kw.T
    s[dum, fre] = d_kw
    np.fill_diagonal(s, 0)
    return replace(bm, d_stsp=s, big_m=big_m, neg_m=neg_m, offset=k * neg_m)


def warm_encoding(sp: Subproblem) -> Tour:
    """The source tour's symmetric-matrix encoding, rebuilt from the walk.

    Guarantees warm-started solvers can never regress below the tour the
    subproblem was cut from.
    """
    k, w = len(sp.segments), len(sp.free_nodes)
    out: list[int] = []
    for token in sp.walk:
        if token >= 0:
            out.append(k + token)
        else:
            s = -token - 1
            out.append(s)
            out.append(k + w + s)
    return Tour(np.asarray(out, dtype=np.int64))


def encode_tour(sp: Subproblem, tour: Tour) -> Tour:
    """Encode a tour that still contains every segment contiguously (start to
    end, forward) as a symmetric-matrix tour; used to warm-start solvers."""
    k, w = len(sp.segments), len(sp.free_nodes)
    if k == 0:
        index_of = {node: i for i, node in enumerate(sp.free_nodes)}
        return Tour(np.asarray([index_of[int(v)] for v in tour.order], dtype=np.int64))

    free_index = {node: k + i for i, node in enumerate(sp.free_nodes)}
    seg_at_start = {seg[0]: idx for idx, seg in enumerate(sp.segments)}
    order = tour.order
    n = order.size
    anchor = sp.free_nodes[0] if w else sp.segments[0][0]
    p = int(np.nonzero(order == anchor)[0][0])
    out: list[int] = []
    i = p
    walked = 0
    while walked < n:
        node = int(order[i % n])
        if node in free_index:
            out.append(free_index[node])
            i += 1
            walked += 1
            continue
        if node not in seg_at_start:
            raise ValueError(f"node {node} is mid-segment; segments are not contiguous here")
        si = seg_at_start[node]
        seg = sp.segments[si]
        for off, expect in enumerate(seg):
            if int(order[(i + off) % n]) != expect:
                raise ValueError(f"segment {si} is broken in this tour")
        out.append(si)          # super node
        out.append(k + w + si)  # its dummy
        i += len(seg)
        walked += len(seg)
    return Tour(np.asarray(out, dtype=np.int64))


def recover(stsp_tour: Tour, sp: Subproblem) -> Tour:
    """Drop dummies and unfold super nodes back into their segments.

    Orientation: a segment is emitted forward when its super node precedes its
    dummy in the walk (predecessor attached at the segment start), reversed
    otherwise. Raises RecoveryError when a dummy strayed from its super node.
    """
    k, w = len(sp.segments), len(sp.free_nodes)
    if k == 0:
        if stsp_tour.n != w:
            raise RecoveryError(f"expected a {w}-node tour, got {stsp_tour.n}")
        return Tour(np.asarray([sp.free_nodes[int(v)] for v in stsp_tour.order], dtype=np.int64))

    dim = w + 2 * k
    if stsp_tour.n != dim:
        raise RecoveryError(f"expected a {dim}-node tour, got {stsp_tour.n}")
    arr = stsp_tour.order
    out: list[int] = []
    for p in range(dim):
        idx = int(arr[p])
        if idx < k:
            dummy = k + w + idx
            if int(arr[(p + 1) % dim]) == dummy:
                out.extend(sp.segments[idx])
            elif int(arr[(p - 1) % dim]) == dummy:
                out.extend(reversed(sp.segments[idx]))
            else:
                raise RecoveryError(f"dummy of super node {idx} is not adjacent to it")
        elif idx < k + w:
            out.append(sp.free_nodes[idx - k])
    return Tour(np.asarray(out, dtype=np.int64))


def splice_if_better(inst: Instance, current: Tour,
                     candidate: Tour) -> tuple[Tour, bool, int]:
    """Hill-climbing acceptance: keep the candidate only if strictly shorter.

    Returns (tour, accepted, gain) with gain = old length - new length when
    accepted, else 0.
    """
    cur_len = tour_length(inst, current)
    cand_len = tour_length(inst, candidate)
    if cand_len < cur_len:
        return candidate, True, cur_len - cand_len
    return current, False, 0
