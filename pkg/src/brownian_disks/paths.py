"""Samplers for the one-dimensional processes behind the disk constructions.

Single-path functions return a :class:`PathGrid`.  Each of them is backed
by a ``*_batch`` routine that draws many independent replicas at once as a
``(size, n + 1)`` array; the experiments use the batch forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import densities
from .rng import as_generator

KINDS = ("bm", "bridge", "excursion", "bessel5", "besselNeg1", "bessel5bridge", "fpbridge", "tilted")


class BudgetExceeded(RuntimeError):
    """Rejection sampler ran out of proposals."""


class ResamplingFailure(RuntimeError):
    """Particle population degenerated (all weights vanished)."""


@dataclass(frozen=True)
class PathGrid:
    t0: float
    t1: float
    n: int
    values: np.ndarray
    kind: str

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if self.n < 1 or vals.shape != (self.n + 1,):
            raise ValueError(f"values must have n+1 = {self.n + 1} entries, got {vals.shape}")
        if not self.t1 > self.t0:
            raise ValueError("empty time window")
        if self.kind not in KINDS:
            raise ValueError(f"unknown path kind {self.kind!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def step(self) -> float:
        return (self.t1 - self.t0) / self.n

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.n + 1)

    def value_at(self, s: float) -> float:
        """Linear interpolation of the grid values at time ``s``."""
        return float(np.interp(s, self.times, self.values))


# ---------------------------------------------------------------- Gaussian


def gaussian_batch(kind, t0, t1, a, b, n, size, gen):
    """Brownian motion (``kind="bm"``, start ``a``) or bridge from ``a`` to ``b``."""
    h = (t1 - t0) / n
    w = np.zeros((size, n + 1))
    np.cumsum(gen.standard_normal((size, n)) * math.sqrt(h), axis=1, out=w[:, 1:])
    if kind == "bridge":
        frac = np.arange(n + 1) / n
        w -= frac * (w[:, -1:] - (b - a))
        w[:, -1] = b - a
    w += a
    if kind == "bridge":
        w[:, -1] = b
    return w


def sample_gaussian_path(kind, window, endpoints, n, rng) -> PathGrid:
    """Brownian motion or Brownian bridge sampled exactly at ``n + 1`` grid points."""
    if kind not in ("bm", "bridge"):
        raise ValueError("kind must be 'bm' or 'bridge'")
    if n < 1:
        raise ValueError("n must be at least 1")
    t0, t1 = map(float, window)
    ends = np.atleast_1d(np.asarray(endpoints, dtype=float))
    if not np.all(np.isfinite(ends)):
        raise ValueError("endpoints must be finite")
    a = ends[0]
    b = ends[1] if ends.size > 1 else 0.0
    if kind == "bridge" and ends.size < 2:
        raise ValueError("a bridge needs two endpoints")
    vals = gaussian_batch(kind, t0, t1, a, b, n, 1, as_generator(rng))[0]
    return PathGrid(t0, t1, n, vals, kind)


# ---------------------------------------------------------------- excursion


def vervaat(bridge):
    """Rotate bridge rows (``b[0] = b[n] = 0``) cyclically at their grid argmin."""
    bridge = np.atleast_2d(bridge)
    size, np1 = bridge.shape
    n = np1 - 1
    k = np.argmin(bridge[:, :n], axis=1)
    idx = (k[:, None] + np.arange(n + 1)[None, :]) % n
    rows = np.arange(size)[:, None]
    e = bridge[rows, idx] - bridge[np.arange(size), k][:, None]
    e[:, 0] = 0.0
    e[:, n] = 0.0
    return e


def excursion_batch(n, size, gen):
    """Normalized excursions on ``[0, 1]`` via the Vervaat transform."""
    return vervaat(gaussian_batch("bridge", 0.0, 1.0, 0.0, 0.0, n, size, gen))


def bessel3_excursion_batch(n, size, gen):
    """Normalized excursions as the norm of a 3-dimensional Brownian bridge 0 -> 0.

    Exact in law at the grid points, unlike :func:`excursion_batch`, whose
    values sit ``O(sqrt(1/n))`` too low because the grid minimum of the
    bridge overestimates the true one.  Functionals that resolve the path
    near zero (the tilt) use this sampler.
    """
    sq = np.zeros((size, n + 1))
    for _ in range(3):
        b = gaussian_batch("bridge", 0.0, 1.0, 0.0, 0.0, n, size, gen)
        sq += b * b
    e = np.sqrt(sq, out=sq)
    e[:, 0] = 0.0
    e[:, n] = 0.0
    return e


def sample_normalized_excursion(n, rng) -> PathGrid:
    if n < 2:
        raise ValueError("n must be at least 2")
    return PathGrid(0.0, 1.0, n, excursion_batch(n, 1, as_generator(rng))[0], "excursion")


# ---------------------------------------------------------------- Bessel(5)


def bessel5_batch(x, t0, t1, n, size, gen):
    """Norm of a 5-dimensional Brownian motion started at distance ``x``."""
    h = (t1 - t0) / n
    pos = np.zeros((size, n + 1, 5))
    pos[:, 0, 0] = x
    np.cumsum(gen.standard_normal((size, n, 5)) * math.sqrt(h), axis=1, out=pos[:, 1:, :])
    pos[:, 1:, 0] += x
    out = np.sqrt(np.einsum("ijk,ijk->ij", pos, pos))
    out[:, 0] = x
    return out


def sample_bessel5(start, window, n, rng) -> PathGrid:
    if start < 0:
        raise ValueError("start must be nonnegative")
    t0, t1 = map(float, window)
    return PathGrid(t0, t1, n, bessel5_batch(float(start), t0, t1, n, 1, as_generator(rng))[0], "bessel5")


def bessel5_bridge_batch(x, t, n, size, gen):
    """Norm of a 5-dimensional Brownian bridge from ``(x,0,0,0,0)`` to the origin."""
    h = t / n
    w = np.zeros((size, n + 1, 5))
    np.cumsum(gen.standard_normal((size, n, 5)) * math.sqrt(h), axis=1, out=w[:, 1:, :])
    frac = (np.arange(n + 1) / n)[None, :, None]
    w -= frac * w[:, -1:, :]
    w[:, :, 0] += x * (1.0 - frac[:, :, 0])
    out = np.sqrt(np.einsum("ijk,ijk->ij", w, w))
    out[:, 0] = x
    out[:, -1] = 0.0
    return out


def sample_bessel5_bridge(x, t, n, rng) -> PathGrid:
    if x < 0 or t <= 0:
        raise ValueError("need x >= 0 and t > 0")
    return PathGrid(0.0, float(t), n, bessel5_bridge_batch(float(x), float(t), n, 1, as_generator(rng))[0],
                    "bessel5bridge")


def bessel5_last_passage_batch(levels, size, gen, dt=1e-4, ratio=6.0, stop_factor=100.0, t_max=1e7,
                               crossing_correction=False):
    """Last passage times of several levels by a 5-Bessel process started at 0.

    The squared radius is advanced with its exact noncentral chi-square
    transition.  Steps are ``max(dt, (d/ratio)^2)`` where ``d`` is the
    distance to the nearest level, so crossings are monitored at resolution
    ``dt`` near the levels and skipped over quickly elsewhere.  A path is
    retired once it exceeds ``stop_factor * max(levels)``; it returns below
    the top level afterwards with probability ``stop_factor^-3``.
    With ``crossing_correction`` a step whose endpoints lie on the same side
    of a level still counts as a passage with the Brownian bridge crossing
    probability ``exp(-2 d d' / h)``.

    Returns ``(times, finished)`` with ``times`` of shape ``(size, len(levels))``.
    """
    levels = np.asarray(levels, dtype=float)
    r_stop = stop_factor * levels.max()
    last = np.full((size, levels.size), np.nan)
    finished = np.zeros(size, dtype=bool)
    idx = np.arange(size)
    r2 = np.zeros(size)
    t = np.zeros(size)
    while idx.size:
        r = np.sqrt(r2)
        d = np.min(np.abs(r[:, None] - levels[None, :]), axis=1)
        h = np.maximum(dt, (d / ratio) ** 2)
        r2n = h * gen.noncentral_chisquare(5, r2 / h)
        rn = np.sqrt(r2n)
        for j, lev in enumerate(levels):
            up = (r <= lev) & (rn > lev)
            down = (r > lev) & (rn <= lev)
            cross = up | down
            if crossing_correction:
                u = gen.random(r.size)
                same = ~cross
                p = np.exp(-2.0 * np.abs(r - lev) * np.where(same, np.abs(rn - lev), 0.0) / h)
                hidden = same & (u < p)
                if hidden.any():
                    last[idx[hidden], j] = t[hidden] + 0.5 * h[hidden]
            if cross.any():
                tc = t[cross] + h[cross] * (lev - r[cross]) / (rn[cross] - r[cross])
                last[idx[cross], j] = tc
        t = t + h
        r2 = r2n
        done = rn > r_stop
        finished[idx[done]] = True
        keep = ~done & (t < t_max)
        idx, r2, t = idx[keep], r2[keep], t[keep]
    return last, finished


# ---------------------------------------------------------------- Bessel(-1)


@numba.njit(cache=True, nogil=True)
def _euler_sub(r, t, h, level, gen, correction):
    """One Euler step; returns ``(new_r, crossed, crossing_time)``."""
    rn = r + math.sqrt(h) * gen.standard_normal() - h / r
    if rn <= level:
        return rn, True, t + h * (r - level) / (r - rn)
    if correction:
        u = gen.random()
        if u < math.exp(-2.0 * (r - level) * (rn - level) / h):
            return rn, True, t + 0.5 * h
    return rn, False, 0.0


@numba.njit(cache=True, nogil=True)
def _neg1_kernel(x, level, dt, nsteps, size, gen, correction, substeps, thr, hit, trace):
    record = trace.size > 1
    for i in range(size):
        r = x
        if record:
            trace[0] = x
        for step in range(nsteps):
            t = step * dt
            crossed = False
            th = 0.0
            if r >= thr:
                r, crossed, th = _euler_sub(r, t, dt, level, gen, correction)
            else:
                hs = dt / substeps
                for k in range(substeps):
                    r, crossed, th = _euler_sub(r, t + k * hs, hs, level, gen, correction)
                    if crossed:
                        break
            if record:
                trace[step + 1] = level if crossed else r
            if crossed:
                hit[i] = th
                if record:
                    trace[step + 2:] = np.nan
                break


def neg1_hitting_batch(x, level, dt, t_max, size, gen, crossing_correction=False,
                       substeps=16, record=False):
    """Euler scheme for ``dR = dB - dt/R`` from ``x`` stopped at ``level``.

    Paths below ``10 sqrt(dt)`` take ``substeps`` sub-steps per step.  With
    ``crossing_correction`` a step that ends above the level still counts as
    a hit with the Brownian bridge crossing probability ``exp(-2 d d'/h)``.
    Returns ``(hit_times, finished)``; unfinished paths get ``inf``.
    With ``record=True`` (``size == 1`` only) the grid values are returned
    as a third element.
    """
    if not x > level >= 0:
        raise ValueError("need x > level >= 0")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if record and size != 1:
        raise ValueError("record needs size == 1")
    nsteps = int(math.ceil(t_max / dt))
    hit = np.full(size, np.inf)
    trace = np.full(nsteps + 1 if record else 1, np.nan)
    _neg1_kernel(float(x), float(level), float(dt), nsteps, size, gen, bool(crossing_correction),
                 int(substeps), 10.0 * math.sqrt(dt), hit, trace)
    finished = np.isfinite(hit)
    if record:
        return hit, finished, trace[~np.isnan(trace)]
    return hit, finished


def sample_bessel_neg1_absorbed(x, level, dt, t_max, rng, crossing_correction=False):
    """One Euler path of the dim -1 process from ``x`` stopped at ``level``.

    Returns ``(path, hit_time, finished)``.  The path lives on the grid
    ``k dt``; its last value is the absorption level (at the first grid time
    after ``hit_time``).  ``finished`` is False when ``t_max`` passed first.
    """
    hit, fin, trace = neg1_hitting_batch(x, level, dt, t_max, 1, as_generator(rng),
                                         crossing_correction=crossing_correction, record=True)
    n = trace.size - 1
    if n < 1:
        trace = np.array([float(x), float(x)])
        n = 1
    return PathGrid(0.0, n * dt, n, trace, "besselNeg1"), float(hit[0]), bool(fin[0])


# ---------------------------------------------------------------- first-passage bridge


def _systematic_resample(w, rows, gen):
    """Systematic resampling of the rows ``rows`` of the weight matrix ``w``."""
    k, p = rows.size, w.shape[1]
    cw = np.cumsum(w[rows], axis=1)
    cw /= cw[:, -1:]
    cw[:, -1] = 1.0
    pos = (gen.random(k)[:, None] + np.arange(p)[None, :]) / p
    off = np.arange(k)[:, None]
    anc = np.searchsorted((cw + off).ravel(), (pos + off).ravel(), side="left")
    return anc.reshape(k, p) - off * p


def first_passage_bridge_batch(x, eps, t, n, size, gen, particles=1024, ess_floor=1e-8):
    """Grid paths of the dim -1 process from ``x`` conditioned to first hit ``eps`` at ``t``.

    Each returned path comes from its own particle population.  Particles
    move with the exact 5-Bessel transition and carry the weights
    ``(y/y')^3 r_{t-s'}(y', eps) / r_{t-s}(y, eps)``, which turn the 5-Bessel
    proposal into the conditioned dim -1 law.  For ``eps > 0`` the killing
    inside a step is approximated by the Brownian bridge crossing probability.
    Systematic resampling happens whenever the effective sample size drops
    below half the population.
    """
    if not x > eps >= 0:
        raise ValueError("need x > eps >= 0")
    if t <= 0:
        raise ValueError("duration must be positive")
    chunk = max(1, 2**21 // (particles * (n + 1)))
    parts = [
        _fp_bridge_chunk(x, eps, t, n, min(chunk, size - i), gen, particles, ess_floor)
        for i in range(0, size, chunk)
    ]
    return np.concatenate(parts, axis=0)


def _fp_bridge_chunk(x, eps, t, n, size, gen, particles, ess_floor):
    h = t / n
    p = particles
    vals = np.empty((n + 1, size, p))
    anc = np.empty((n + 1, size, p), dtype=np.int64)
    vals[0] = x
    anc[0] = np.arange(p)[None, :]
    logw = np.zeros((size, p))
    y = np.full((size, p), float(x))
    r_prev = np.full((size, p), float(densities.neg1_first_passage_density(t, x, eps)))
    rows = np.arange(size)[:, None]
    for k in range(1, n):
        y2 = h * gen.noncentral_chisquare(5, y * y / h)
        yn = np.sqrt(y2)
        alive = yn > eps
        ynn = np.where(alive, yn, 2.0 * eps + 1.0)
        r_next = densities.neg1_first_passage_density(t - k * h, ynn, eps)
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            inc = 3.0 * np.log(y / ynn) + np.log(r_next) - np.log(r_prev)
            if eps > 0:
                cross = np.exp(-2.0 * (y - eps) * (ynn - eps) / h)
                inc += np.log1p(-np.minimum(cross, 1.0))
        inc = np.where(alive & (r_next > 0), inc, -np.inf)
        logw = logw + inc
        y, r_prev = ynn, r_next
        a_k = np.broadcast_to(np.arange(p), (size, p)).copy()
        m = logw.max(axis=1, keepdims=True)
        if not np.all(np.isfinite(m)):
            raise ResamplingFailure("all particle weights vanished")
        w = np.exp(logw - m)
        ess = w.sum(axis=1) ** 2 / (w * w).sum(axis=1)
        if np.any(ess < ess_floor * p):
            raise ResamplingFailure(f"effective sample size collapsed to {ess.min():.3g}")
        low = np.flatnonzero(ess < 0.5 * p)
        if low.size:
            a = _systematic_resample(w, low, gen)
            a_k[low] = a
            y[low] = np.take_along_axis(y[low], a, axis=1)
            r_prev[low] = np.take_along_axis(r_prev[low], a, axis=1)
            logw[low] = 0.0
        vals[k] = y
        anc[k] = a_k
    # the telescoped weights already contain r_h(y_{n-1}, eps), the density
    # of landing on eps at time t
    m = logw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise ResamplingFailure("all particle weights vanished")
    w = np.exp(logw - m)
    w /= w.sum(axis=1, keepdims=True)
    pick = (w.cumsum(axis=1) < gen.random(size)[:, None]).sum(axis=1)
    pick = np.minimum(pick, p - 1)
    out = np.empty((size, n + 1))
    out[:, n] = eps
    j = pick
    for k in range(n - 1, 0, -1):
        out[:, k] = vals[k][rows[:, 0], j]
        j = anc[k][rows[:, 0], j]
    out[:, 0] = x
    return out


def sample_first_passage_bridge(x, eps, t, n, rng, particles=1024) -> PathGrid:
    vals = first_passage_bridge_batch(float(x), float(eps), float(t), n, 1, as_generator(rng), particles)[0]
    return PathGrid(0.0, float(t), n, vals, "fpbridge")


# ---------------------------------------------------------------- tilted excursion


def tilt_batch(values, eps, h):
    """Trapezoid rule for ``int dt/(eps + e_t)^2`` over rows of ``values``."""
    s = eps + values
    with np.errstate(divide="ignore"):
        f = 1.0 / (s * s)
    total = h * (f[:, 1:-1].sum(axis=1) + 0.5 * (f[:, 0] + f[:, -1]))
    return np.where(np.any(s == 0, axis=1), np.inf, total)


def tilt_functional(path: PathGrid, eps: float) -> float:
    """``int_0^1 dt / (eps + path_t)^2`` by the trapezoid rule.

    Returns ``inf`` when ``eps + path`` vanishes at a grid point, which is
    the correct value for an excursion at ``eps = 0``.
    """
    if path.t0 != 0.0 or path.t1 != 1.0:
        raise ValueError("tilt functional needs a path on [0, 1]")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if np.any(eps + path.values < 0):
        raise ValueError("eps + path must be nonnegative")
    return float(tilt_batch(path.values[None, :], eps, path.step)[0])


def tilted_excursion_batch(eps, n, n_accept, gen, budget=None, block=2048):
    """Accepted excursions under the ``exp(-tilt)`` weighting, by rejection.

    Proposals come from :func:`bessel3_excursion_batch`, exact at the grid.

    ``budget`` caps the total number of proposals (default ``10^6`` per
    requested path).  Returns ``(paths, proposals)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if budget is None:
        budget = 10**6 * n_accept
    h = 1.0 / n
    kept = []
    got = 0
    used = 0
    while got < n_accept:
        if used >= budget:
            raise BudgetExceeded(f"{used} proposals gave {got} of {n_accept} tilted excursions")
        m = int(min(block, budget - used))
        e = bessel3_excursion_batch(n, m, gen)
        u = gen.random(m)
        acc = u < np.exp(-tilt_batch(e, eps, h))
        used += m
        if acc.any():
            take = e[acc][: n_accept - got]
            if got + acc.sum() > n_accept:
                # count proposals only up to the last accepted one we keep
                last = np.flatnonzero(acc)[n_accept - got - 1]
                used -= m - (last + 1)
            kept.append(take)
            got += take.shape[0]
    return np.concatenate(kept, axis=0), used


def sample_tilted_excursion(eps, n, rng, budget=10**6):
    """One tilted excursion; returns ``(path, proposals)``."""
    paths, used = tilted_excursion_batch(eps, n, 1, as_generator(rng), budget=budget, block=256)
    return PathGrid(0.0, 1.0, n, paths[0], "tilted"), used


# ---------------------------------------------------------------- scaling


def scale_path(path: PathGrid, lam: float) -> PathGrid:
    """Snake scaling of a path: time multiplied by ``lam^2``, values by ``sqrt(lam)``."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    s = math.sqrt(lam)
    return PathGrid(path.t0 * lam * lam, path.t1 * lam * lam, path.n, path.values * s, path.kind)
