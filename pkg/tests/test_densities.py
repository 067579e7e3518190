import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from brownian_disks import densities as d

QUAD = dict(epsabs=1e-13, epsrel=1e-12, limit=500)


def tquad(f, *args):
    """Integral over (0, inf) split at 1 so quad sees both regimes."""
    a = integrate.quad(f, 0.0, 1.0, args=args, **QUAD)[0]
    b = integrate.quad(f, 1.0, np.inf, args=args, **QUAD)[0]
    return a + b


# ---------------------------------------------------------------- erfcx


@pytest.mark.parametrize("z", [-10.0, -3.0, -0.5, 0.0, 0.3, 1.0, 5.0, 7.9, 8.0, 8.1, 30.0, 1e3, 1e6])
def test_erfcx_against_mpmath(z):
    ref = float(mpmath.exp(mpmath.mpf(z) ** 2) * mpmath.erfc(z))
    assert d.erfcx(z) == pytest.approx(ref, rel=1e-12)


def test_erfcx_one_by_defining_integral():
    # erfcx(z) = 2/sqrt(pi) int_0^inf exp(-t^2 - 2 z t) dt
    val = integrate.quad(lambda t: math.exp(-t * t - 2.0 * t), 0.0, np.inf, epsabs=1e-15, epsrel=1e-14)[0]
    assert d.erfcx(1.0) == pytest.approx(2.0 / math.sqrt(math.pi) * val, rel=1e-12)


def test_erfcx_large_argument_asymptotics():
    z = 1e5
    assert d.erfcx(z) * z * math.sqrt(math.pi) == pytest.approx(1.0 - 0.5 / z**2, rel=1e-12)
    assert d.erfcx(0.0) == 1.0


# ---------------------------------------------------------------- q and r


def test_bm_first_passage_values_and_mass():
    assert d.bm_first_passage_density(1.0, 1.0, 0.0) == pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi),
                                                                      rel=1e-14)
    assert tquad(d.bm_first_passage_density, 1.0, 0.0) == pytest.approx(1.0, abs=1e-6)


@given(st.floats(0.1, 10), st.floats(0.01, 5), st.floats(0.5, 3))
def test_bm_first_passage_scaling(t, x, lam):
    lhs = d.bm_first_passage_density(lam**2 * t, lam * (x + 0.1), lam * 0.1)
    rhs = d.bm_first_passage_density(t, x + 0.1, 0.1) / lam**2
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_getoor_density_value_and_mode():
    assert d.neg1_first_passage_density(1.0, 1.0, 0.0) == pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi),
                                                                         rel=1e-14)
    x = 1.7
    ts = np.linspace(0.05, 2.0, 200001)
    tmax = ts[np.argmax(d.neg1_first_passage_density(ts, x, 0.0))]
    assert tmax == pytest.approx(x * x / 5.0, abs=2e-5)


@pytest.mark.parametrize("eps", [0.0, 0.2, 0.6])
def test_r_integrates_to_one(eps):
    assert tquad(d.neg1_first_passage_density, 1.0, eps) == pytest.approx(1.0, abs=1e-6)


def test_r_shifted_converges_to_getoor():
    errs = [abs(d.neg1_first_passage_density(0.5, 1.0 + e, e) - d.neg1_first_passage_density(0.5, 1.0, 0.0))
            for e in (0.1, 0.01, 0.001)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("eps", [0.0, 0.2])
def test_r_laplace_transform(lam, eps):
    num = tquad(lambda t: math.exp(-lam * t) * d.neg1_first_passage_density(t, 1.0, eps))
    assert num == pytest.approx(d.last_passage_laplace(1.0, lam, eps), abs=1e-6)


def test_laplace_small_lambda_tends_to_one():
    assert d.last_passage_laplace(1.0, 1e-12, 0.3) == pytest.approx(1.0, abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(st.floats(-8, 8), st.floats(-6, 3), st.floats(0.0, 0.9))
def test_r_finite_positive_over_wide_range(logt, logd, frac):
    t = 10.0**logt
    gap = 10.0**logd
    eps = frac * 1.0
    v = d.neg1_first_passage_density(t, eps + gap, eps)
    assert np.isfinite(v) and v >= 0.0


def test_r_no_underflow_for_large_u():
    # tiny eps makes u = sqrt(t)/(eps sqrt 2) huge; the value must stay close to the eps = 0 limit
    v = d.neg1_first_passage_density(1e4, 1.0 + 1e-8, 1e-8)
    ref = d.neg1_first_passage_density(1e4, 1.0, 0.0)
    assert v > 0 and v == pytest.approx(ref, rel=1e-4)


def test_first_passage_cdf_matches_quadrature():
    for eps in (0.0, 0.2):
        for t in (0.05, 0.4, 3.0):
            ref = integrate.quad(d.neg1_first_passage_density, 0.0, t, args=(1.0, eps), **QUAD)[0]
            assert d.neg1_first_passage_cdf(t, 1.0, eps) == pytest.approx(ref, abs=1e-6)


# ---------------------------------------------------------------- transitions


def test_bessel5_transition_mass_and_moment():
    m = integrate.quad(lambda y: d.bessel5_transition(1.0, 1.0, y), 0, np.inf, **QUAD)[0]
    assert m == pytest.approx(1.0, abs=1e-8)
    m2 = integrate.quad(lambda y: y * y * d.bessel5_transition(0.7, 0.0, y), 0, np.inf, **QUAD)[0]
    assert m2 == pytest.approx(5 * 0.7, abs=1e-8)


def test_bessel5_transition_against_chi_noncentral():
    # |x e1 + sqrt(t) Z|^2 / t is noncentral chi-square(5, x^2/t)
    t, x, y = 0.8, 1.3, 0.9
    ref = stats.ncx2.pdf(y * y / t, 5, x * x / t) * 2 * y / t
    assert d.bessel5_transition(t, x, y) == pytest.approx(ref, rel=1e-10)


def test_bessel5_chapman_kolmogorov():
    lhs = integrate.quad(lambda y: d.bessel5_transition(0.5, 1.0, y) * d.bessel5_transition(0.5, y, 2.0),
                         0, np.inf, **QUAD)[0]
    assert lhs == pytest.approx(d.bessel5_transition(1.0, 1.0, 2.0), abs=1e-6)


def test_h_transform_identity_exact():
    t, x, y = 0.6, 0.8, 1.7
    assert d.neg1_transition(t, x, y) * y**3 / x**3 == d.bessel5_transition(t, x, y)


def test_neg1_mass_deficit_is_absorption():
    mass = integrate.quad(lambda y: d.neg1_transition(1.0, 1.0, y), 0, np.inf, **QUAD)[0]
    absorbed = integrate.quad(d.neg1_first_passage_density, 0, 1.0, args=(1.0, 0.0), **QUAD)[0]
    assert mass < 1
    assert mass == pytest.approx(1.0 - absorbed, abs=1e-6)


def test_green_is_time_integral():
    g = tquad(lambda t: d.neg1_transition(t, 1.0, 2.0))
    assert g == pytest.approx(d.green(1.0, 2.0), abs=1e-5)
    assert d.green(1.0, 2.0) == pytest.approx(1 / 6, rel=1e-15)
    assert d.green(2.0, 1.0) == pytest.approx(2 / 3, rel=1e-15)
    assert d.green(0.0, 1.0, y_infinite=True) == pytest.approx(2 / 3, rel=1e-15)


def test_killed_transition_small_eps_and_bounds():
    assert abs(d.killed_transition(1.0, 1.0, 2.0, 0.001) - d.neg1_transition(1.0, 1.0, 2.0)) < 1e-3
    k = d.killed_transition(1.0, 1.0, 2.0, 0.3)
    assert 0 <= k <= d.neg1_transition(1.0, 1.0, 2.0)
    assert d.killed_transition(1e-4, 1.0, 2.0, 0.3) < 1e-100


def test_markov_identity_for_r():
    # r_1(1, 0.2) = int p^(0.2)_{1/2}(1, y) r_{1/2}(y, 0.2) dy
    eps = 0.2
    f = lambda y: d.killed_transition(0.5, 1.0, y, eps) * d.neg1_first_passage_density(0.5, y, eps)
    val = integrate.quad(f, eps, 8.0, epsabs=1e-9, epsrel=1e-8, limit=200)[0]
    assert val == pytest.approx(d.neg1_first_passage_density(1.0, 1.0, eps), abs=1e-4)


# ---------------------------------------------------------------- midpoint laws and tails


@pytest.mark.parametrize("kind", ["bessel5bridge00", "excursion"])
def test_midpoint_densities_normalized(kind):
    m = integrate.quad(lambda x: d.midpoint_density(kind, x), 0, np.inf, epsabs=1e-14, epsrel=1e-13)[0]
    assert m == pytest.approx(1.0, abs=1e-10)
    printed = integrate.quad(lambda x: d.midpoint_density(kind, x, printed=True), 0, np.inf)[0]
    assert printed == pytest.approx(math.sqrt(2), rel=1e-10)


def test_midpoint_means_match_chi_laws():
    mean_rho = integrate.quad(lambda x: x * d.midpoint_density("bessel5bridge00", x), 0, np.inf)[0]
    mean_pi = integrate.quad(lambda x: x * d.midpoint_density("excursion", x), 0, np.inf)[0]
    assert mean_rho == pytest.approx(0.5 * stats.chi.mean(5), rel=1e-10)
    assert mean_rho == pytest.approx(d.C5 / 8, rel=1e-10)
    assert mean_pi == pytest.approx(0.5 * stats.chi.mean(3), rel=1e-10)


def test_snake_min_tail():
    assert d.snake_min_tail(-1.0) == 1.5
    assert d.snake_min_tail(-2.0) == 0.375
    ys = -np.linspace(0.1, 5, 50)
    assert np.all(np.diff(d.snake_min_tail(ys)) < 0)
    with pytest.raises(ValueError):
        d.snake_min_tail(0.0)


def test_domain_errors():
    with pytest.raises(ValueError):
        d.bm_first_passage_density(1.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        d.neg1_first_passage_density(1.0, 0.1, 0.2)


def test_tilted_midpoint_density_normalized():
    for eps in (0.5, 0.1):
        m = integrate.quad(lambda x: d.tilted_midpoint_density(x, eps), 0, np.inf, limit=200)[0]
        assert m == pytest.approx(1.0, abs=1e-8)
