"""Quotient distances on a labeled exploration sequence.

For sites ``u, v`` with labels ``L``,

    D0(u, v) = L[u] + L[v] - 2 max(min L over arc [u, v], min L over arc [v, u])

where the two arcs are the clockwise stretches of the exploration from
``u`` to ``v`` and from ``v`` to ``u``.  On a line (half-plane window) the
arc that leaves the window has minimum ``-inf`` and drops out.  The
distance ``D`` is the largest pseudo-metric below ``D0``, i.e. the
shortest-path closure of the complete graph with edge weights ``D0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .forest import LabeledCycle

APSP_MAX = 2000


# ---------------------------------------------------------------- range minima


@numba.njit(cache=True, nogil=True)
def _rmq(table, logt, i, j):
    k = logt[j - i + 1]
    a = table[k, i]
    b = table[k, j - (1 << k) + 1]
    return a if a < b else b


class RmqTable:
    """Sparse table of range minima over the labels, doubled for cyclic queries."""

    def __init__(self, labels, cyclic=True):
        lab = np.asarray(labels, dtype=float)
        self.labels = lab.copy()
        self.n = lab.size
        self.cyclic = bool(cyclic)
        seq = np.concatenate([lab, lab]) if cyclic else lab.copy()
        m = seq.size
        levels = max(1, int(m).bit_length())
        table = np.empty((levels, m))
        table[0] = seq
        for k in range(1, levels):
            w = 1 << (k - 1)
            table[k, : m - w] = np.minimum(table[k - 1, : m - w], table[k - 1, w:])
            table[k, m - w:] = table[k - 1, m - w:]
        self.table = table
        logt = np.zeros(m + 1, dtype=np.int64)
        for i in range(2, m + 1):
            logt[i] = logt[i // 2] + 1
        self.logt = logt

    def query(self, i, j):
        """Minimum of the (doubled) sequence over positions ``i..j`` inclusive."""
        if not 0 <= i <= j < self.table.shape[1]:
            raise IndexError("query out of range")
        return float(_rmq(self.table, self.logt, i, j))

    def arc_min(self, i, j):
        """Minimum over the clockwise arc from site ``i`` to site ``j``."""
        if j >= i:
            return self.query(i, j)
        if not self.cyclic:
            return -np.inf
        return self.query(i, j + self.n)


def build_rmq(cycle: LabeledCycle) -> RmqTable:
    return RmqTable(cycle.label, cyclic=cycle.topology == "cycle")


@numba.njit(cache=True, nogil=True)
def _dcirc(lab, table, logt, n, cyclic, u, v):
    if u == v:
        return 0.0
    i, j = (u, v) if u < v else (v, u)
    m = _rmq(table, logt, i, j)
    if cyclic:
        m2 = _rmq(table, logt, j, i + n)
        if m2 > m:
            m = m2
    return lab[u] + lab[v] - 2.0 * m


def d_circ(cycle: LabeledCycle, rmq: RmqTable, i: int, j: int) -> float:
    """The premetric ``D0`` between sites ``i`` and ``j``."""
    return float(_dcirc(rmq.labels, rmq.table, rmq.logt, rmq.n, rmq.cyclic, i, j))


def d_circ_matrix(cycle: LabeledCycle) -> np.ndarray:
    """All pairwise ``D0`` values from running minima (test oracle, ``O(N^2)`` memory)."""
    lab = cycle.label
    n = lab.size
    if cycle.topology == "cycle":
        seq = np.concatenate([lab, lab])
        idx = np.arange(n)[:, None] + np.arange(n)[None, :]
        run = np.minimum.accumulate(seq[idx], axis=1)
        fwd = np.empty((n, n))
        fwd[np.arange(n)[:, None], idx % n] = run
        best = np.maximum(fwd, fwd.T)
    else:
        best = np.empty((n, n))
        for i in range(n):
            r = np.minimum.accumulate(lab[i:])
            best[i, i:] = r
            best[i:, i] = r
    d = lab[:, None] + lab[None, :] - 2.0 * best
    np.fill_diagonal(d, 0.0)
    return d


# ---------------------------------------------------------------- shortest paths


@dataclass(frozen=True)
class DistanceField:
    """Distances from a source set; sites farther than ``max_dist`` hold ``inf``."""

    sources: np.ndarray
    values: np.ndarray
    max_dist: float = np.inf


@numba.njit(cache=True, nogil=True)
def _dijkstra_dense(lab, table, logt, n, cyclic, sources):
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    for s in sources:
        dist[s] = 0.0
    for _ in range(n):
        u = -1
        best = np.inf
        for v in range(n):
            if not done[v] and dist[v] < best:
                best = dist[v]
                u = v
        if u < 0:
            break
        done[u] = True
        for v in range(n):
            if done[v]:
                continue
            nd = best + _dcirc(lab, table, logt, n, cyclic, u, v)
            if nd < dist[v]:
                dist[v] = nd
    return dist


@numba.njit(cache=True, nogil=True)
def _sift_up(key, heap, pos, i):
    v = heap[i]
    while i > 0:
        p = (i - 1) >> 1
        w = heap[p]
        if key[w] < key[v] or (key[w] == key[v] and w < v):
            break
        heap[i] = w
        pos[w] = i
        i = p
    heap[i] = v
    pos[v] = i


@numba.njit(cache=True, nogil=True)
def _sift_down(key, heap, pos, size, i):
    v = heap[i]
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        r = c + 1
        if r < size and (key[heap[r]] < key[heap[c]] or (key[heap[r]] == key[heap[c]] and heap[r] < heap[c])):
            c = r
        w = heap[c]
        if key[v] < key[w] or (key[v] == key[w] and v < w):
            break
        heap[i] = w
        pos[w] = i
        i = c
    heap[i] = v
    pos[v] = i


@numba.njit(cache=True, nogil=True)
def _dijkstra_bounded(lab, n, cyclic, sources, radius):
    """Dijkstra restricted to distances ``<= radius``.

    From a settled site ``u`` at distance ``d`` only edges of weight at most
    ``B = radius - d`` matter.  Along either direction of the exploration
    the arc minimum ``m`` only decreases and the edge weight through that
    arc is at least ``L[u] - m``, so each scan stops as soon as
    ``m < L[u] - B``.  Distances up to ``radius`` are exact.  The queue is
    an indexed binary heap with decrease-key, so memory stays ``O(n)``.
    """
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    heap = np.empty(n, dtype=np.int64)
    pos = np.full(n, -1, dtype=np.int64)
    size = 0
    for s in sources:
        if pos[s] < 0:
            dist[s] = 0.0
            heap[size] = s
            pos[s] = size
            size += 1
            _sift_up(dist, heap, pos, size - 1)
    while size > 0:
        u = heap[0]
        d = dist[u]
        if d > radius:
            break
        size -= 1
        pos[u] = -2
        if size > 0:
            heap[0] = heap[size]
            pos[heap[0]] = 0
            _sift_down(dist, heap, pos, size, 0)
        done[u] = True
        budget = radius - d
        lu = lab[u]
        floor = lu - budget
        for direction in (1, -1):
            m = lu
            for step in range(1, n):
                v = u + direction * step
                if cyclic:
                    v %= n
                elif v < 0 or v >= n:
                    break
                lv = lab[v]
                if lv < m:
                    m = lv
                if m < floor:
                    break
                if done[v]:
                    continue
                c = lu + lv - 2.0 * m
                if c <= budget:
                    nd = d + c
                    if nd < dist[v]:
                        dist[v] = nd
                        if pos[v] < 0:
                            heap[size] = v
                            pos[v] = size
                            size += 1
                        _sift_up(dist, heap, pos, pos[v])
    for v in range(n):
        if not done[v]:
            dist[v] = np.inf
    return dist


def sssp(cycle: LabeledCycle, rmq: RmqTable | None, sources, max_dist=None) -> DistanceField:
    """Quotient distance ``D`` from a set of source sites.

    Without ``max_dist`` this is Dijkstra over the implicit complete graph
    (``O(N^2)``).  With ``max_dist`` the search only follows edges that can
    lead to distances ``<= max_dist`` and reports ``inf`` beyond; within the
    radius the values are identical.
    """
    src = np.unique(np.atleast_1d(np.asarray(sources, dtype=np.int64)))
    if src.size == 0:
        raise ValueError("empty source set")
    if src.min() < 0 or src.max() >= cycle.size:
        raise IndexError("source index out of range")
    cyclic = cycle.topology == "cycle"
    if max_dist is None:
        if rmq is None:
            rmq = build_rmq(cycle)
        vals = _dijkstra_dense(rmq.labels, rmq.table, rmq.logt, rmq.n, cyclic, src)
        return DistanceField(src, vals, np.inf)
    vals = _dijkstra_bounded(np.ascontiguousarray(cycle.label), cycle.size, cyclic, src, float(max_dist))
    return DistanceField(src, vals, float(max_dist))


def apsp_oracle(cycle: LabeledCycle, rmq: RmqTable | None = None) -> np.ndarray:
    """Floyd-Warshall closure of ``D0`` (tests only)."""
    if cycle.size > APSP_MAX:
        raise ValueError(f"apsp oracle limited to {APSP_MAX} sites")
    d = d_circ_matrix(cycle)
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :], out=d)
    return d


# ---------------------------------------------------------------- geometric queries


def boundary_distance(cycle: LabeledCycle, rmq: RmqTable | None = None, max_dist=None) -> DistanceField:
    """Distance from every site to the set of boundary sites."""
    b = cycle.boundary_index
    if b.size == 0:
        raise ValueError("cycle has no boundary sites")
    return sssp(cycle, rmq, b, max_dist=max_dist)


def tubular_volume(cycle: LabeledCycle, field: DistanceField, eps: float) -> float:
    """Total weight of the sites within distance ``eps`` of the field's sources."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps > field.max_dist:
        raise ValueError("field was computed up to a smaller radius")
    return float(cycle.weight[field.values <= eps].sum())


@dataclass(frozen=True)
class Ball:
    sites: np.ndarray
    volume: float
    boundary_trace_length: float


def ball(cycle: LabeledCycle, rmq: RmqTable | None, center: int, r: float) -> Ball:
    """Sites within distance ``r`` of ``center`` with their volume and boundary length."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    f = sssp(cycle, rmq, [center], max_dist=r)
    inside = np.flatnonzero(f.values <= r)
    vol = float(cycle.weight[inside].sum())
    trace = float(cycle.is_boundary[inside].sum()) * cycle.base_spacing
    return Ball(inside, vol, trace)


def boundary_profile(cycle: LabeledCycle, field: DistanceField):
    """Distances along the boundary of a boundary-pointed disk, in base order.

    Returns ``(base_coord, distance)`` arrays.
    """
    if cycle.kind != "boundary-pointed":
        raise ValueError("boundary profile needs a boundary-pointed disk")
    b = cycle.boundary_index
    return cycle.base_coord[b], field.values[b]
