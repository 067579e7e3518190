import math

import numpy as np
import pytest

from brownian_disks import forest, metric
from brownian_disks.rng import RngStream


def random_cycles(count=50, seed=0):
    """Mixed test population of ``count`` cycles with at most 500 sites.

    Random-walk labels on cycles and lines (some with ties), plus small
    sampled disks and half-plane windows; oversized samples are redrawn.
    """
    out = []
    g = np.random.default_rng(seed)
    k = 0
    while len(out) < count:
        kind = len(out) % 5
        k += 1
        if kind == 0:
            n = int(g.integers(2, 300))
            c = forest.synthetic_cycle(np.cumsum(g.standard_normal(n)), "cycle")
        elif kind == 1:
            n = int(g.integers(2, 300))
            lab = np.round(np.cumsum(g.standard_normal(n)), 1)
            c = forest.synthetic_cycle(lab, "line", boundary=g.random(n) < 0.2)
        elif kind == 2:
            c = forest.build_disk("pointed", 16, 5e-3, 200, RngStream(k))
        elif kind == 3:
            c = forest.build_disk("boundary-pointed", 16, 5e-3, 200, RngStream(k))
        else:
            c = forest.build_halfplane_window("bm", 0, 1, 16, 5e-3, 200, RngStream(k), max_tree_sites=64)
        if c.size <= 500:
            out.append(c)
    return out


CYCLES = random_cycles()


# ---------------------------------------------------------------- range minima


def test_rmq_single_site():
    r = metric.RmqTable([3.5])
    assert r.query(0, 0) == 3.5
    assert r.arc_min(0, 0) == 3.5


def test_rmq_exhaustive_against_scan():
    lab = np.random.default_rng(1).standard_normal(512)
    r = metric.RmqTable(lab, cyclic=False)
    for i in range(512):
        run = np.minimum.accumulate(lab[i:])
        got = np.array([r.query(i, j) for j in range(i, 512)])
        np.testing.assert_array_equal(got, run)


def test_rmq_cyclic_wraparound():
    lab = np.random.default_rng(2).standard_normal(100)
    r = metric.RmqTable(lab)
    for i, j in [(90, 5), (50, 49), (99, 0)]:
        assert r.arc_min(i, j) == min(lab[i:].min(), lab[:j + 1].min())
    assert metric.RmqTable(lab, cyclic=False).arc_min(90, 5) == -np.inf
    with pytest.raises(IndexError):
        r.query(5, 4)


# ---------------------------------------------------------------- D0


def test_d_circ_hand_example():
    c = forest.synthetic_cycle([0.0, 2.0, 1.0, 3.0])
    r = metric.build_rmq(c)
    assert metric.d_circ(c, r, 0, 2) == 1.0
    assert metric.d_circ(c, r, 1, 3) == 2.0 + 3.0 - 2.0 * 1.0
    assert metric.d_circ(c, r, 2, 2) == 0.0


def test_d_circ_constant_labels():
    c = forest.synthetic_cycle(np.full(9, 1.7))
    assert np.all(metric.d_circ_matrix(c) == 0.0)


def test_d_circ_line_drops_outer_arc():
    c = forest.synthetic_cycle([0.0, 2.0, 1.0, 3.0], "line")
    r = metric.build_rmq(c)
    assert metric.d_circ(c, r, 1, 3) == 5.0 - 2.0 * 1.0
    assert metric.d_circ(c, r, 0, 3) == 3.0


@pytest.mark.parametrize("idx", range(0, 50, 7))
def test_d_circ_matrix_matches_pairwise(idx):
    c = CYCLES[idx]
    r = metric.build_rmq(c)
    m = metric.d_circ_matrix(c)
    n = c.size
    g = np.random.default_rng(idx)
    for i, j in g.integers(0, n, size=(200, 2)):
        assert metric.d_circ(c, r, i, j) == m[i, j]
    assert np.all(m == m.T)
    assert np.all(m >= np.abs(c.label[:, None] - c.label[None, :]) - 1e-12)


# ---------------------------------------------------------------- shortest paths


def test_population_size():
    assert len(CYCLES) == 50
    assert max(c.size for c in CYCLES) <= 500


@pytest.mark.parametrize("idx", range(len(CYCLES)))
def test_dijkstra_matches_floyd_warshall(idx):
    c = CYCLES[idx]
    d = metric.apsp_oracle(c)
    g = np.random.default_rng(100 + idx)
    for s in g.integers(0, c.size, size=3):
        np.testing.assert_allclose(metric.sssp(c, None, [s]).values, d[s], atol=1e-9, rtol=0)
    radius = float(np.quantile(d, 0.3))
    s = int(g.integers(0, c.size))
    b = metric.sssp(c, None, [s], max_dist=radius).values
    inside = d[s] <= radius
    np.testing.assert_allclose(b[inside], d[s][inside], atol=1e-9, rtol=0)
    assert np.all(np.isinf(b[~inside]) | (b[~inside] <= radius + 1e-9))


@pytest.mark.parametrize("idx", range(0, len(CYCLES), 4))
def test_apsp_pseudometric_axioms(idx):
    c = CYCLES[idx]
    d = metric.apsp_oracle(c)
    d0 = metric.d_circ_matrix(c)
    assert np.all(np.diag(d) == 0.0)
    assert np.all(d == d.T)
    assert np.all(d <= d0)
    assert np.all(d >= np.abs(c.label[:, None] - c.label[None, :]) - 1e-9)
    for k in range(c.size):
        assert np.all(d <= d[:, k:k + 1] + d[k:k + 1, :] + 1e-9)
    again = d.copy()
    for k in range(c.size):
        np.minimum(again, again[:, k:k + 1] + again[k:k + 1, :], out=again)
    np.testing.assert_allclose(again, d, atol=1e-12, rtol=0)


def test_apsp_size_guard():
    with pytest.raises(ValueError):
        metric.apsp_oracle(forest.synthetic_cycle(np.zeros(metric.APSP_MAX + 1)))


def test_distance_from_argmin_is_label_gap():
    c = forest.build_disk("pointed", 512, 1e-4, 2000, RngStream(3))
    s = forest.forest_argmin(c)
    f = metric.sssp(c, None, [s])
    np.testing.assert_allclose(f.values, c.label - c.label[s], atol=1e-12, rtol=0)


def test_distance_from_zero_site_is_label():
    c = forest.build_disk("boundary-pointed", 512, 1e-4, 2000, RngStream(4))
    s = int(np.flatnonzero(c.label == 0.0)[0])
    f = metric.sssp(c, None, [s])
    np.testing.assert_allclose(f.values, c.label, atol=1e-12, rtol=0)
    x, prof = metric.boundary_profile(c, f)
    assert prof[0] == 0.0 and x[0] == 0.0
    np.testing.assert_allclose(prof, c.label[c.is_boundary], atol=1e-12, rtol=0)


def test_boundary_profile_needs_boundary_pointed():
    c = forest.build_disk("pointed", 64, 1e-3, 200, RngStream(5))
    with pytest.raises(ValueError):
        metric.boundary_profile(c, metric.sssp(c, None, [0]))


def test_bounded_equals_dense_on_disk():
    c = forest.build_disk("pointed", 1024, 1e-5, 2000, RngStream(6), max_tree_sites=4096)
    dense = metric.boundary_distance(c)
    r = 0.2
    bounded = metric.boundary_distance(c, max_dist=r)
    inside = dense.values <= r
    np.testing.assert_array_equal(bounded.values[inside], dense.values[inside])
    assert np.all(np.isinf(bounded.values[~inside]))


def test_scaling_equivariance_exact():
    c = CYCLES[2]
    s = forest.scale_cycle(c, 4.0)
    np.testing.assert_array_equal(metric.d_circ_matrix(s), 2.0 * metric.d_circ_matrix(c))
    np.testing.assert_array_equal(metric.apsp_oracle(s), 2.0 * metric.apsp_oracle(c))
    t = forest.scale_cycle(c, 2.25)
    np.testing.assert_allclose(metric.apsp_oracle(t), 1.5 * metric.apsp_oracle(c), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_cactus_bound_on_base_pairs(seed):
    c = forest.build_halfplane_window("bm", 0, 1, 64, 1e-3, 500, RngStream(seed))
    if c.size > metric.APSP_MAX:
        pytest.skip("sample above oracle size")
    d = metric.apsp_oracle(c)
    b = c.boundary_index
    base = metric.RmqTable(c.label[b], cyclic=False)
    lab = c.label[b]
    for i in range(b.size):
        for j in range(i + 1, b.size):
            bound = lab[i] + lab[j] - 2.0 * base.query(i, j)
            assert d[b[i], b[j]] >= bound - 1e-9


def test_boundary_distance_against_oracle():
    for c in CYCLES[2::5]:
        if c.boundary_index.size == 0:
            continue
        d = metric.apsp_oracle(c)
        ref = d[:, c.boundary_index].min(axis=1)
        f = metric.boundary_distance(c)
        np.testing.assert_allclose(f.values, ref, atol=1e-9, rtol=0)
        assert np.all(f.values[c.boundary_index] == 0.0)


def test_sssp_errors():
    c = CYCLES[0]
    with pytest.raises(ValueError):
        metric.sssp(c, None, [])
    with pytest.raises(IndexError):
        metric.sssp(c, None, [c.size])
    with pytest.raises(ValueError):
        metric.boundary_distance(forest.synthetic_cycle([1.0, 2.0]))


# ---------------------------------------------------------------- tubes and balls


def test_tubular_volume_limits_and_monotonicity():
    c = forest.build_disk("pointed", 256, 1e-4, 1000, RngStream(7), max_tree_sites=2048)
    f = metric.boundary_distance(c)
    assert metric.tubular_volume(c, f, 0.0) == 0.0
    assert metric.tubular_volume(c, f, f.values.max()) == pytest.approx(c.total_weight, rel=1e-12)
    vols = [metric.tubular_volume(c, f, e) for e in np.linspace(0, 1, 30)]
    assert np.all(np.diff(vols) >= 0)
    with pytest.raises(ValueError):
        metric.tubular_volume(c, metric.boundary_distance(c, max_dist=0.1), 0.2)
    with pytest.raises(ValueError):
        metric.tubular_volume(c, f, -1.0)


def test_ball_limits():
    c = CYCLES[4]
    center = c.size // 2
    b0 = metric.ball(c, None, center, 0.0)
    np.testing.assert_array_equal(b0.sites, [center])
    assert b0.volume == c.weight[center]
    diam = metric.apsp_oracle(c).max()
    full = metric.ball(c, None, center, diam)
    assert full.sites.size == c.size
    assert full.volume == pytest.approx(c.total_weight)
    assert full.boundary_trace_length == pytest.approx(c.boundary_index.size * c.base_spacing)
    with pytest.raises(ValueError):
        metric.ball(c, None, center, -0.1)


def test_dense_cost_reasonable():
    # guard against accidental quadratic Python loops in the production path
    import time
    c = forest.build_disk("pointed", 2048, 1e-5, 2000, RngStream(8))
    t = time.perf_counter()
    metric.boundary_distance(c, max_dist=0.1)
    assert time.perf_counter() - t < 30.0
    assert math.isfinite(c.total_weight)
