"""Poisson forests of labeled trees and the discretized disks built from them.

A labeled space is stored as a :class:`LabeledCycle`: the sites of the
exploration sequence (clockwise around the base circle, or left to right
along a base segment), where each tree's contour sites are inserted as one
contiguous block right after the boundary site its root is attached to.

Trees are discretized snake excursions.  Their lifetime (contour) function
is a normalized excursion scaled to duration ``sigma``; their labels follow
the discrete snake walk: at every contour step the current ancestral path
is cut back to the lowest height visited in that step and extended by an
independent Gaussian increment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import paths
from .rng import RngStream, as_stream

SQRT3 = math.sqrt(3.0)

DISK_KINDS = ("pointed", "boundary-pointed")
HALFPLANE_KINDS = ("bm", "bessel")


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True, nogil=True)
def _contour(zc, m, out):
    """Vervaat-rotated Gaussian bridge with ``m`` steps written to ``out``."""
    s = 1.0 / math.sqrt(m)
    w = np.empty(m + 1)
    w[0] = 0.0
    for j in range(m):
        w[j + 1] = w[j] + zc[j] * s
    wm = w[m]
    kbest = 0
    best = 0.0
    for j in range(m):
        b = w[j] - wm * j / m
        w[j] = b
        if j == 0 or b < best:
            best = b
            kbest = j
    w[m] = 0.0
    for j in range(m + 1):
        out[j] = w[(kbest + j) % m] - best
    out[0] = 0.0
    out[m] = 0.0


@numba.njit(cache=True, nogil=True)
def _snake_walk(zeta, zb, ze, root_label, tips, hs, ws):
    """Tip labels of the snake driven by the lifetime sequence ``zeta``.

    The stack ``(hs, ws)`` holds the breakpoints (height, label) of the
    current ancestral path.  Cutting it at a height strictly inside an edge
    samples the label there from the Brownian bridge along that edge
    (normal ``zb``); growing it uses the normal ``ze``.
    """
    m = zeta.size - 1
    top = 0
    hs[0] = 0.0
    ws[0] = root_label
    tips[0] = root_label
    for i in range(m):
        lo = min(zeta[i], zeta[i + 1])
        ph = 0.0
        pw = 0.0
        while hs[top] > lo:
            ph = hs[top]
            pw = ws[top]
            top -= 1
        if hs[top] < lo:
            ah = hs[top]
            aw = ws[top]
            span = ph - ah
            var = (lo - ah) * (ph - lo) / span
            top += 1
            hs[top] = lo
            ws[top] = aw + (lo - ah) / span * (pw - aw) + math.sqrt(var) * zb[i]
        if zeta[i + 1] > lo:
            top += 1
            hs[top] = zeta[i + 1]
            ws[top] = ws[top - 1] + math.sqrt(zeta[i + 1] - lo) * ze[i]
        tips[i + 1] = ws[top]


@numba.njit(cache=True, nogil=True)
def _forest_kernel(sigmas, ms, root_labels, zc, zb, ze, zeta_out, tips_out):
    """Contours and tips for a list of trees stored back to back.

    Tree ``i`` uses ``ms[i]`` normals from each of ``zc, zb, ze`` and fills
    ``ms[i] + 1`` entries of ``zeta_out`` and ``tips_out``.
    """
    mmax = 0
    for i in range(ms.size):
        if ms[i] > mmax:
            mmax = ms[i]
    hs = np.empty(mmax + 2)
    ws = np.empty(mmax + 2)
    off_n = 0
    off_v = 0
    for i in range(ms.size):
        m = ms[i]
        z = zeta_out[off_v:off_v + m + 1]
        _contour(zc[off_n:off_n + m], m, z)
        sq = math.sqrt(sigmas[i])
        for j in range(m + 1):
            z[j] *= sq
        _snake_walk(z, zb[off_n:off_n + m], ze[off_n:off_n + m], root_labels[i],
                    tips_out[off_v:off_v + m + 1], hs, ws)
        off_n += m
        off_v += m + 1


MAX_TREE_SITES = 2**20


def sites_per_tree(sigma, m_per_unit, max_sites=MAX_TREE_SITES):
    """Contour grid size ``max(8, ceil(m_per_unit * sigma))``, capped at ``max_sites``.

    The free disk's volume has an infinite mean, so an occasional tree is
    huge; the cap bounds memory at the price of a coarser grid in that tree.
    """
    m = np.maximum(8, np.ceil(np.asarray(sigma) * m_per_unit))
    return np.minimum(m, max_sites).astype(np.int64)


def _grow_trees(sigmas, ms, root_labels, gen):
    total = int(ms.sum())
    zc = gen.standard_normal(total)
    zb = gen.standard_normal(total)
    ze = gen.standard_normal(total)
    zeta = np.empty(total + ms.size)
    tips = np.empty(total + ms.size)
    _forest_kernel(np.asarray(sigmas, dtype=float), ms, np.asarray(root_labels, dtype=float),
                   zc, zb, ze, zeta, tips)
    return zeta, tips, (zc, zb, ze)


# ---------------------------------------------------------------- single trees


@dataclass(frozen=True)
class SnakeTree:
    sigma: float
    m: int
    zeta: np.ndarray
    tips: np.ndarray
    root_time: float
    root_label: float
    noise: tuple = field(repr=False, default=())

    @property
    def w_min(self) -> float:
        """Label minimum relative to the root (``W_*`` at grid scale)."""
        return float(self.tips.min() - self.root_label)

    @property
    def height(self) -> float:
        return float(self.zeta.max())


def sample_snake_tree(sigma, m, root_time, root_label, rng) -> SnakeTree:
    """One discretized snake excursion of duration ``sigma`` on ``m`` contour steps."""
    if sigma <= 0 or m < 2:
        raise ValueError("need sigma > 0 and m >= 2")
    gen = rng if isinstance(rng, np.random.Generator) else as_stream(rng).generator()
    ms = np.array([m], dtype=np.int64)
    zeta, tips, noise = _grow_trees([sigma], ms, [root_label], gen)
    return SnakeTree(float(sigma), int(m), zeta, tips, float(root_time), float(root_label), noise)


def regenerate_tips(tree: SnakeTree) -> np.ndarray:
    """Rerun the snake walk from the stored noise (round-trip check)."""
    zc, zb, ze = tree.noise
    zeta = np.empty(tree.m + 1)
    tips = np.empty(tree.m + 1)
    _forest_kernel(np.array([tree.sigma]), np.array([tree.m], dtype=np.int64),
                   np.array([tree.root_label]), zc, zb, ze, zeta, tips)
    return tips


def sample_tree_skeleton(length, sigma_min, rng, origin=0.0):
    """Roots and durations of the trees with ``sigma > sigma_min`` over a base of given length.

    The trees form a Poisson process with intensity ``2 dt N_0``; under the
    excursion measure the duration tail is ``(2 pi s)^(-1/2)``.  Returns two
    arrays ``(root_times, sigmas)`` sorted by root time.
    """
    if sigma_min <= 0:
        raise ValueError("sigma_min must be positive")
    gen = rng if isinstance(rng, np.random.Generator) else as_stream(rng).generator()
    mean = 2.0 * length / math.sqrt(2.0 * math.pi * sigma_min)
    count = gen.poisson(mean)
    roots = origin + length * gen.random(count)
    u = 1.0 - gen.random(count)  # in (0, 1]
    sigmas = sigma_min / (u * u)
    order = np.argsort(roots, kind="stable")
    return roots[order], sigmas[order]


def sample_forest_minima(length, level, rng, origin=0.0):
    """Atoms of the Poisson forest whose label minimum lies below ``-level``.

    Under ``2 dt N_0`` the minima ``W_*`` of the trees form a Poisson process
    with intensity ``2 dt 3/|y|^3 dy``, so there are Poisson(``3 L/level^2``)
    such trees, rooted uniformly, with ``W_* = -level U^(-1/2)``.  Returns
    ``(root_times, w_min)`` sorted by root time.
    """
    if level <= 0:
        raise ValueError("level must be positive")
    gen = rng if isinstance(rng, np.random.Generator) else as_stream(rng).generator()
    count = gen.poisson(3.0 * length / (level * level))
    roots = origin + length * gen.random(count)
    w = -level / np.sqrt(1.0 - gen.random(count))
    order = np.argsort(roots, kind="stable")
    return roots[order], w[order]


# ---------------------------------------------------------------- cycles


@dataclass(frozen=True)
class LabeledCycle:
    """Exploration sequence of a discretized labeled space.

    ``base_coord`` of a tree site is the base coordinate of its root.
    ``tree_id`` is -1 on boundary sites.  ``base_spacing`` is the base
    arc-length represented by each boundary site.
    """

    topology: str
    label: np.ndarray
    weight: np.ndarray
    is_boundary: np.ndarray
    base_coord: np.ndarray
    tree_id: np.ndarray
    base_length: float
    base_spacing: float
    sigma_min: float
    kind: str = "synthetic"
    window: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.topology not in ("cycle", "line"):
            raise ValueError("topology must be 'cycle' or 'line'")
        arrs = {
            "label": np.asarray(self.label, dtype=float),
            "weight": np.asarray(self.weight, dtype=float),
            "is_boundary": np.asarray(self.is_boundary, dtype=bool),
            "base_coord": np.asarray(self.base_coord, dtype=float),
            "tree_id": np.asarray(self.tree_id, dtype=np.int64),
        }
        n = arrs["label"].size
        for k, v in arrs.items():
            if v.shape != (n,):
                raise ValueError(f"site field {k} has shape {v.shape}, expected ({n},)")
            v = v.copy() if v.base is not None or v.flags.writeable else v
            v.setflags(write=False)
            object.__setattr__(self, k, v)
        if n == 0:
            raise ValueError("empty cycle")
        if np.any(self.weight < 0):
            raise ValueError("negative site weight")

    @property
    def size(self) -> int:
        return self.label.size

    @property
    def boundary_index(self) -> np.ndarray:
        return np.flatnonzero(self.is_boundary)

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    @property
    def n_trees(self) -> int:
        t = self.tree_id[self.tree_id >= 0]
        return int(np.unique(t).size)


def synthetic_cycle(labels, topology="cycle", weights=None, boundary=None) -> LabeledCycle:
    """Cycle from raw labels (every site a unit-weight tree site unless flagged)."""
    labels = np.asarray(labels, dtype=float)
    n = labels.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    b = np.zeros(n, dtype=bool) if boundary is None else np.asarray(boundary, dtype=bool)
    nb = max(int(b.sum()), 1)
    coord = np.maximum(np.cumsum(b) - 1, 0) / nb
    return LabeledCycle(topology, labels, np.where(b, 0.0, w), b, coord,
                        np.where(b, -1, np.arange(n)), 1.0, 1.0 / nb, 0.0)


def _assemble(topology, base_coords, base_labels, root_index, root_times, sigmas, ms, tips,
              keep, base_length, spacing, sigma_min, kind, window):
    """Interleave boundary sites and tree blocks in exploration order.

    Tree blocks are the contour sites ``1..m`` (site ``m`` is the return to
    the root) and follow the boundary site at ``root_index``.  Site ``m``
    is a copy of the root, a boundary point, so it carries no volume; the
    tree's duration is spread evenly over sites ``1..m-1``.
    """
    nb = base_labels.size
    ms_k = ms[keep]
    nt = ms_k.size
    starts = np.concatenate([[0], np.cumsum(ms + 1)])[:-1]
    # tip indices 1..m of every kept tree
    mask = np.repeat(keep, ms + 1)
    mask[starts] = False
    sel = np.flatnonzero(mask)
    t_lab = tips[sel]
    t_tree = np.repeat(np.arange(nt), ms_k)
    t_w = np.repeat(sigmas[keep] / (ms_k - 1), ms_k)
    t_w[np.cumsum(ms_k) - 1] = 0.0
    t_root = np.repeat(root_index[keep], ms_k)
    t_coord = np.repeat(root_times[keep], ms_k)
    # within one root: order by root time then contour position (both already sorted)
    key_primary = np.concatenate([np.arange(nb), t_root])
    key_second = np.concatenate([np.zeros(nb, dtype=np.int64), 1 + np.arange(t_lab.size)])
    order = np.lexsort((key_second, key_primary))
    label = np.concatenate([base_labels, t_lab])[order]
    weight = np.concatenate([np.zeros(nb), t_w])[order]
    isb = np.concatenate([np.ones(nb, dtype=bool), np.zeros(t_lab.size, dtype=bool)])[order]
    coord = np.concatenate([base_coords, t_coord])[order]
    tid = np.concatenate([np.full(nb, -1), t_tree])[order]
    return LabeledCycle(topology, label, weight, isb, coord, tid, base_length, spacing,
                        sigma_min, kind, window)


def build_disk(kind, n_base, sigma_min, m_per_unit, rng, max_tree_sites=MAX_TREE_SITES) -> LabeledCycle:
    """Discretized free pointed disk (``"pointed"``) or boundary-pointed disk.

    Base labels are ``sqrt 3`` times a normalized excursion (pointed) or
    times a 5-dimensional Bessel bridge from 0 to 0 (boundary-pointed) on
    ``n_base`` boundary sites.  Trees come from the Poisson forest on the
    unit circle; for the boundary-pointed disk every tree reaching a label
    ``<= 0`` is deleted, which realizes the conditioning by Poisson thinning.
    """
    if kind not in DISK_KINDS:
        raise ValueError(f"unknown disk kind {kind!r}")
    if n_base < 8:
        raise ValueError("n_base must be at least 8")
    stream = as_stream(rng)
    g_base = stream.generator(0)
    if kind == "pointed":
        base = SQRT3 * paths.excursion_batch(n_base, 1, g_base)[0, :n_base]
    else:
        base = SQRT3 * paths.bessel5_bridge_batch(0.0, 1.0, n_base, 1, g_base)[0, :n_base]
    roots, sigmas = sample_tree_skeleton(1.0, sigma_min, stream.generator(1))
    ridx = np.minimum((roots * n_base).astype(np.int64), n_base - 1)
    ms = sites_per_tree(sigmas, m_per_unit, max_tree_sites)
    _zeta, tips, _ = _grow_trees(sigmas, ms, base[ridx], stream.generator(2))
    keep = np.ones(sigmas.size, dtype=bool)
    if kind == "boundary-pointed":
        keep = _block_minima(tips, ms) > 0.0
    coords = np.arange(n_base) / n_base
    return _assemble("cycle", coords, base, ridx, roots, sigmas, ms, tips, keep, 1.0, 1.0 / n_base,
                     sigma_min, kind, (0.0, 1.0))


def _block_minima(tips, ms):
    """Minimum over contour sites ``1..m`` of each tree."""
    starts = np.concatenate([[0], np.cumsum(ms + 1)])[:-1]
    return np.minimum.reduceat(tips, starts + 1) if ms.size else np.zeros(0)


def _unit_base(kind, unit, n_per_unit, stream):
    """Increments of the base process over one unit interval.

    For ``unit >= 0`` the values run forward from ``unit``; for ``unit < 0``
    they run backward from ``unit + 1``.  Returns an ``(n_per_unit, d)``
    array of increments (``d = 1`` for Brownian labels, 5 for Bessel).
    """
    d = 1 if kind == "bm" else 5
    g = stream.generator(0, unit + 2**31)
    return g.standard_normal((n_per_unit, d)) * math.sqrt(1.0 / n_per_unit)


def halfplane_base(kind, a, b, n_per_unit, rng):
    """Base coordinates and labels of a half-plane window on the integer window ``[a, b]``."""
    stream = as_stream(rng)
    lo, hi = min(a, 0), max(b, 0)
    d = 1 if kind == "bm" else 5
    right = [np.zeros((1, d))]
    for u in range(0, hi):
        right.append(_unit_base(kind, u, n_per_unit, stream))
    left = [np.zeros((1, d))]
    for u in range(-1, lo - 1, -1):
        left.append(_unit_base(kind, u, n_per_unit, stream))
    pos_r = np.cumsum(np.concatenate(right), axis=0)
    pos_l = np.cumsum(np.concatenate(left), axis=0)[1:][::-1]
    pos = np.concatenate([pos_l, pos_r])
    vals = pos[:, 0] if kind == "bm" else np.sqrt((pos * pos).sum(axis=1))
    coords = np.arange(lo * n_per_unit, hi * n_per_unit + 1) / n_per_unit
    sel = (coords >= a) & (coords <= b)
    return coords[sel], SQRT3 * vals[sel]


def build_halfplane_window(kind, a, b, n_base, sigma_min, m_per_unit, rng,
                           max_tree_sites=MAX_TREE_SITES) -> LabeledCycle:
    """Window ``[a, b]`` of a half-plane, as a line-topology exploration.

    ``kind="bm"``: labels ``sqrt 3`` times two-sided Brownian motion, trees
    kept unconditionally.  ``kind="bessel"``: labels ``sqrt 3`` times a
    two-sided 5-dimensional Bessel process from 0, trees reaching a label
    ``<= 0`` deleted.  ``a`` and ``b`` must be integers and ``n_base`` is
    the number of boundary sites per unit length.  Every unit interval
    ``[u, u+1)`` draws from its own sub-streams, so windows nest: the part
    of a larger window inside ``[a, b]`` equals the direct sample.
    """
    if kind not in HALFPLANE_KINDS:
        raise ValueError(f"unknown half-plane kind {kind!r}")
    if not a < b:
        raise ValueError("need a < b")
    if int(a) != a or int(b) != b:
        raise ValueError("window ends must be integers")
    a, b = int(a), int(b)
    stream = as_stream(rng)
    coords, base = halfplane_base(kind, a, b, n_base, stream)
    roots_l, sig_l, ms_l, tips_l = [], [], [], []
    for u in range(a, b):
        roots, sigmas = sample_tree_skeleton(1.0, sigma_min, stream.generator(1, u + 2**31), origin=u)
        ridx = np.minimum(((roots - a) * n_base).astype(np.int64), (b - a) * n_base - 1)
        ms = sites_per_tree(sigmas, m_per_unit, max_tree_sites)
        _z, tips, _ = _grow_trees(sigmas, ms, base[ridx], stream.generator(2, u + 2**31))
        roots_l.append(roots)
        sig_l.append(sigmas)
        ms_l.append(ms)
        tips_l.append(tips)
    roots = np.concatenate(roots_l)
    sigmas = np.concatenate(sig_l)
    ms = np.concatenate(ms_l)
    tips = np.concatenate(tips_l)
    ridx = np.minimum(((roots - a) * n_base).astype(np.int64), (b - a) * n_base - 1)
    keep = np.ones(sigmas.size, dtype=bool)
    if kind == "bessel":
        keep = _block_minima(tips, ms) > 0.0
    return _assemble("line", coords, base, ridx, roots, sigmas, ms, tips, keep, float(b - a),
                     1.0 / n_base, sigma_min, "halfplane-" + kind, (float(a), float(b)))


def restrict_window(cycle: LabeledCycle, a, b) -> LabeledCycle:
    """Sites of a half-plane window whose base coordinate lies in ``[a, b]``.

    Tree sites are kept when their root lies in ``[a, b)``.
    """
    c = cycle.base_coord
    sel = np.where(cycle.is_boundary, (c >= a) & (c <= b), (c >= a) & (c < b))
    return LabeledCycle(cycle.topology, cycle.label[sel], cycle.weight[sel], cycle.is_boundary[sel],
                        c[sel], cycle.tree_id[sel], float(b - a), cycle.base_spacing, cycle.sigma_min, cycle.kind,
                        (float(a), float(b)))


def forest_argmin(cycle: LabeledCycle) -> int:
    """Index of the smallest label (lowest index on ties)."""
    return int(np.argmin(cycle.label))


def scale_cycle(cycle: LabeledCycle, lam: float) -> LabeledCycle:
    """Scaling of the whole space: labels by ``sqrt(lam)``, volumes by ``lam^2``, base by ``lam``."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    s = math.sqrt(lam)
    w0, w1 = cycle.window
    return LabeledCycle(cycle.topology, cycle.label * s, cycle.weight * (lam * lam), cycle.is_boundary,
                        cycle.base_coord * lam, cycle.tree_id, cycle.base_length * lam,
                        cycle.base_spacing * lam, cycle.sigma_min * lam * lam, cycle.kind,
                        (w0 * lam, w1 * lam))
