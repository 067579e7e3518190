"""Closed-form densities for Bessel processes of dimensions 5 and -1.

Notation used throughout:

* ``q_t(x, eps)`` -- density of the hitting time of ``eps`` by linear
  Brownian motion started at ``x``.
* ``r_t(x, eps)`` -- density of the hitting time of ``eps`` by the Bessel
  process of dimension -1 started at ``x``.  For ``eps = 0`` this is the
  Getoor density, i.e. the law of the last passage time at ``x`` of a
  5-dimensional Bessel process started from 0.
* ``p'_t(x, y)`` -- transition density of the 5-dimensional Bessel process.
* ``p_t(x, y)`` -- transition density of the dimension -1 process killed at 0,
  related to ``p'`` by the h-transform ``p_t(x, y) = (x/y)^3 p'_t(x, y)``.
* ``p^eps_t(y, z)`` -- the dimension -1 transition density killed at ``eps``.

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, interpolate, special

__all__ = [
    "erfcx",
    "bm_first_passage_density",
    "neg1_first_passage_density",
    "first_passage_ratio",
    "bessel5_transition",
    "neg1_transition",
    "killed_transition",
    "green",
    "midpoint_density",
    "snake_min_tail",
    "last_passage_laplace",
    "tilted_midpoint_density",
    "tilt_normalizer",
    "neg1_first_passage_cdf",
    "C5",
    "C3",
]

SQRT_PI = math.sqrt(math.pi)
SQRT_2PI = math.sqrt(2.0 * math.pi)

# normalizing constants of x^4 exp(-2x^2) and x^2 exp(-2x^2) on (0, inf)
C5 = 2.0 ** 3.5 / math.gamma(2.5)
C3 = 16.0 / SQRT_2PI
# constants as they are usually printed; each of these integrates to sqrt(2)
C5_PRINTED = 64.0 / (3.0 * SQRT_PI)
C3_PRINTED = 16.0 / SQRT_PI

# above this argument the tail of the erfcx series is summed directly
_U_SERIES = 8.0


def erfcx(z):
    """Scaled complementary error function ``exp(z^2) erfc(z)``."""
    return special.erfcx(z)


def _check_barrier(x, eps):
    if np.any(np.asarray(x) <= np.asarray(eps)):
        raise ValueError("start level x must be strictly above the barrier eps")
    if np.any(np.asarray(eps) < 0):
        raise ValueError("barrier eps must be nonnegative")


def bm_first_passage_density(t, x, eps=0.0):
    """Density ``q_t(x, eps)`` of the Brownian hitting time of ``eps`` from ``x``."""
    _check_barrier(x, eps)
    t = np.asarray(t, dtype=float)
    d = np.asarray(x, dtype=float) - eps
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = d / np.sqrt(2.0 * np.pi * t ** 3) * np.exp(-d * d / (2.0 * t))
    return np.where(t > 0, out, 0.0)[()]


def _erfcx_tail_u3(u):
    """``u^3 (sqrt(pi) erfcx(u) - 1/u + 1/(2u^3))`` for large ``u``.

    Asymptotic series; only called with ``u >= 8`` where 30 terms reach
    machine precision long before the series starts to diverge.
    """
    u = np.asarray(u, dtype=float)
    inv2 = 1.0 / (u * u)
    term = 0.75 * inv2
    total = term.copy()
    for k in range(3, 34):
        term = -term * (2 * k - 1) * 0.5 * inv2
        total = total + term
    return total


def _k_factor(t, x, eps):
    """Bracket of the ``r_t(x, eps)`` formula times ``2 sqrt(pi)``.

    With ``u = sqrt(t)/(eps sqrt 2) + (x - eps)/sqrt(2t)`` the bracket
    ``erfcx(u)/(2 eps^3) - 1/(eps^2 sqrt(2 pi t)) + x/(eps sqrt(2 pi t^3))``
    suffers two orders of cancellation when ``u`` is large.  There the
    leading terms of the erfcx expansion are removed analytically, leaving
    a sum of positive terms in which ``eps^3`` cancels against ``u^3``.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    d = x - eps
    s = np.sqrt(t)
    u = s / (eps * math.sqrt(2.0)) + d / (math.sqrt(2.0) * s)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        direct = (
            SQRT_PI * special.erfcx(u)
            - 2.0 * eps * SQRT_PI / np.sqrt(2.0 * np.pi * t)
            + 2.0 * eps * eps * SQRT_PI * x / np.sqrt(2.0 * np.pi * t ** 3)
        ) / eps ** 3
        num = d * (t * (x + 2.0 * eps) + eps * d * (2.0 * x + eps) + x * eps * eps * d * d / t)
        big = np.maximum(u, _U_SERIES)
        # u * eps without forming u when eps is tiny
        ue = np.where(u < _U_SERIES, _U_SERIES * eps, s / math.sqrt(2.0) + eps * d / (math.sqrt(2.0) * s))
        series = (num / (2.0 * t * t) + _erfcx_tail_u3(big)) / ue ** 3
    return np.where(u < _U_SERIES, direct, series)


def neg1_first_passage_density(t, x, eps=0.0):
    """Density ``r_t(x, eps)`` of the hitting time of ``eps`` by the dim -1 process.

    ``eps = 0`` gives the Getoor density ``x^3 (2 pi t^5)^(-1/2) exp(-x^2/2t)``.
    """
    _check_barrier(x, eps)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.all(np.asarray(eps) == 0):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = x ** 3 / np.sqrt(2.0 * np.pi * t ** 5) * np.exp(-x * x / (2.0 * t))
        return np.where(t > 0, out, 0.0)[()]
    eps = float(eps)
    d = x - eps
    tt = np.where(t > 0, t, 1.0)
    k = _k_factor(tt, x, eps)
    with np.errstate(under="ignore"):
        out = k / (2.0 * SQRT_PI) * d * np.exp(-d * d / (2.0 * tt))
    return np.where(t > 0, out, 0.0)[()]


def first_passage_ratio(t, x, eps):
    """Ratio ``r_t(x, eps) / q_t(x, eps)``, free of the common Gaussian factor.

    For ``eps > 0`` it equals the conditional expectation of
    ``exp(-int_0^t ds / B_s^2)`` given that Brownian motion started at ``x``
    first hits ``eps`` at time ``t``, multiplied by ``x / eps``.
    """
    _check_barrier(x, eps)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if eps == 0:
        return (x * x / t)[()]
    return (t ** 1.5 * _k_factor(t, x, eps) / math.sqrt(2.0))[()]


def _i32_scaled(z):
    """``exp(-z) I_{3/2}(z) sqrt(pi z / 2)`` from the elementary closed form."""
    z = np.asarray(z, dtype=float)
    small = z < 0.5
    zs = np.where(small, z, 0.0)
    # cosh z - sinh z / z = sum_k 2k z^{2k} / (2k+1)!
    ser = np.zeros_like(zs)
    for k in range(8, 0, -1):
        ser = ser * zs * zs + 2.0 * k / math.factorial(2 * k + 1)
    ser = ser * zs * zs * np.exp(-zs)
    zl = np.where(small, 1.0, z)
    e2 = np.exp(-2.0 * zl)
    large = 0.5 * (1.0 + e2) - 0.5 * (1.0 - e2) / zl
    return np.where(small, ser, large)


def bessel5_transition(t, x, y):
    """Transition density ``p'_t(x, y)`` of the 5-dimensional Bessel process."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0):
        raise ValueError("start must be nonnegative")
    at_zero = x == 0
    xs = np.where(at_zero, 1.0, x)
    z = xs * y / t
    with np.errstate(under="ignore", divide="ignore", invalid="ignore"):
        # (y/t)(y/x)^{3/2} e^{-(x^2+y^2)/2t} I_{3/2}(xy/t), I_{3/2}(z) = sqrt(2/(pi z)) (...)
        gen = (
            (y / t) * (y / xs) ** 1.5 * math.sqrt(2.0 / math.pi) / np.sqrt(z)
            * np.exp(-((xs - y) ** 2) / (2.0 * t)) * _i32_scaled(z)
        )
        origin = y ** 4 * np.exp(-y * y / (2.0 * t)) / (2.0 ** 1.5 * math.gamma(2.5) * t ** 2.5)
    out = np.where(at_zero, origin, gen)
    return np.where(y > 0, out, 0.0)[()]


def neg1_transition(t, x, y):
    """Transition density ``p_t(x, y)`` of the dim -1 process killed at 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0):
        raise ValueError("start must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (x / y) ** 3 * bessel5_transition(t, x, y)
    return np.where(y > 0, out, 0.0)[()]


def killed_transition(t, y, z, eps, epsabs=1e-10, epsrel=1e-8):
    """Transition density ``p^eps_t(y, z)`` of the dim -1 process killed at ``eps``.

    Obtained from the strong Markov property at the hitting time of ``eps``,
    ``p_t(y,z) - int_0^t r_s(y,eps) p_{t-s}(eps,z) ds``.  The convolution is
    computed after the change of variable ``s = t sin^2(theta)``.
    """
    if eps <= 0:
        raise ValueError("barrier eps must be positive")
    if y <= eps or z <= eps:
        raise ValueError("arguments must lie above the barrier")
    if t <= 0:
        raise ValueError("time must be positive")

    def integrand(theta):
        s = t * math.sin(theta) ** 2
        if s <= 0.0 or s >= t:
            return 0.0
        jac = 2.0 * t * math.sin(theta) * math.cos(theta)
        return float(neg1_first_passage_density(s, y, eps) * neg1_transition(t - s, eps, z)) * jac

    conv, _err = integrate.quad(integrand, 0.0, 0.5 * math.pi, epsabs=epsabs, epsrel=epsrel, limit=200)
    return float(neg1_transition(t, y, z)) - conv


def green(y, z, eps=0.0, y_infinite=False):
    """Green function of the dim -1 process killed at ``eps``.

    ``G(y,z) = 2/3 z min(1, y^3/z^3)`` and ``G^eps(y,z) = G(y,z) - G(eps,z)``;
    ``y_infinite`` gives the limit ``2/3 z (1 - eps^3/z^3)``.
    """
    if eps < 0:
        raise ValueError("barrier eps must be nonnegative")
    z = float(z)
    if z <= eps:
        raise ValueError("z must lie above the barrier")
    if y_infinite:
        return 2.0 / 3.0 * z * (1.0 - eps ** 3 / z ** 3)
    if y <= eps:
        raise ValueError("y must lie above the barrier")
    g = 2.0 / 3.0 * z * min(1.0, y ** 3 / z ** 3)
    return g - 2.0 / 3.0 * eps ** 3 / z ** 2


def midpoint_density(kind, x, printed=False):
    """Density at time 1/2 of the Bessel(5) bridge 0->0 or of the normalized excursion.

    ``kind`` is ``"bessel5bridge00"`` (``rho``) or ``"excursion"`` (``pi``).
    ``printed=True`` uses the commonly printed constants, which are off by a
    factor sqrt(2); it exists only for side-by-side display.
    """
    x = np.asarray(x, dtype=float)
    if kind == "bessel5bridge00":
        c = C5_PRINTED if printed else C5
        out = c * x ** 4 * np.exp(-2.0 * x * x)
    elif kind == "excursion":
        c = C3_PRINTED if printed else C3
        out = c * x ** 2 * np.exp(-2.0 * x * x)
    else:
        raise ValueError(f"unknown midpoint density kind {kind!r}")
    return np.where(x >= 0, out, 0.0)[()]


def snake_min_tail(y):
    """Snake excursion measure of ``{W_* <= y}``, equal to ``3/(2 y^2)``."""
    y = np.asarray(y, dtype=float)
    if np.any(y >= 0):
        raise ValueError("y must be negative")
    return (1.5 / (y * y))[()]


def last_passage_laplace(x, lam, eps=0.0):
    """Laplace transform ``E[exp(-lam T_eps)]`` for the dim -1 process from ``x``."""
    _check_barrier(x, eps)
    r = np.sqrt(2.0 * np.asarray(lam, dtype=float))
    return ((1.0 + x * r) / (1.0 + eps * r) * np.exp(-(x - eps) * r))[()]


def _tilt_weight(x, eps):
    # conditional Feynman-Kac weight for the half-excursion ending at height x
    return eps / (x + eps) * first_passage_ratio(0.5, x + eps, eps)


def tilted_midpoint_density(x, eps, normalized=True):
    """Density at time 1/2 of the excursion tilted by ``exp(-int dt/(eps+e_t)^2)``.

    By the Markov property at time 1/2 and time reversal, the unnormalized
    density is ``pi(x) w(x)^2`` where ``w(x)`` is the tilt weight of a
    Brownian path from ``x`` conditioned to first hit 0 at time 1/2.
    """
    x = np.asarray(x, dtype=float)
    xs = np.where(x > 0, x, 1.0)
    out = midpoint_density("excursion", xs) * _tilt_weight(xs, eps) ** 2
    out = np.where(x > 0, out, 0.0)
    if normalized:
        out = out / tilt_normalizer(eps)
    return out[()]


def tilt_normalizer(eps):
    """``C_eps = E[exp(-int_0^1 dt/(eps+e_t)^2)]`` for the normalized excursion."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    val, _err = integrate.quad(
        lambda v: float(tilted_midpoint_density(v, eps, normalized=False)),
        0.0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=400,
    )
    return val


def neg1_first_passage_cdf(t, x, eps=0.0, grid=2000):
    """Distribution function of the hitting time with density ``r_t(x, eps)``.

    ``eps = 0`` uses ``P(chi^2_3 > x^2/t)``.  For ``eps > 0`` the density is
    integrated once on a logarithmic grid (adaptive quadrature between
    consecutive nodes) and interpolated by a cubic Hermite spline.
    """
    _check_barrier(x, eps)
    t = np.asarray(t, dtype=float)
    x = float(x)
    if eps == 0:
        with np.errstate(divide="ignore"):
            return np.where(t > 0, special.chdtrc(3, x * x / np.where(t > 0, t, 1.0)), 0.0)[()]
    d = x - eps
    lo, hi = d * d * 1e-4, d * d * 1e6
    nodes = np.geomspace(lo, hi, grid)
    f = lambda s: float(neg1_first_passage_density(s, x, eps))
    pieces = np.array([integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-12)[0]
                       for a, b in zip(nodes[:-1], nodes[1:])])
    head = integrate.quad(f, 0.0, lo, epsabs=1e-16)[0]
    cdf = head + np.concatenate([[0.0], np.cumsum(pieces)])
    # cubic Hermite in log t with the exact slope t r_t
    slope = nodes * neg1_first_passage_density(nodes, x, eps)
    spline = interpolate.CubicHermiteSpline(np.log(nodes), cdf, slope)
    out = spline(np.log(np.clip(t, lo, hi)))
    out = np.where(t <= 0, 0.0, np.where(t >= hi, 1.0, out))
    return out[()]
