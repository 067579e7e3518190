import math

import numpy as np
import pytest

from brownian_disks import experiments as ex
from brownian_disks import io

SMALL = {
    "ceps": {"replicas": 4000, "eps": [0.5, 0.2], "grids": {"path_n": 256},
             "options": {"forest_replicas": 4000, "block": 2048}},
    "boundary_measure": {"replicas": 4, "grids": {"n_base": 64, "sigma_min": 1e-3, "m_per_unit": 200.0,
                                                  "max_tree_sites": 4096}},
    "tv_bridge": {"replicas": 500, "eps": [0.4, 0.2], "grids": {"path_n": 128},
                  "options": {"bins": 10, "profile_replicas": 40}},
    "kappa": {"replicas": 4, "grids": {"n_base": 64, "sigma_min": 1e-3, "m_per_unit": 200.0,
                                       "max_tree_sites": 4096}},
    "halfplane_equiv": {"replicas": 10, "windows": [[-2, 2]],
                        "grids": {"n_base": 32, "sigma_min": 1e-3, "m_per_unit": 100.0, "max_tree_sites": 2048},
                        "options": {"saturation_tol": 1.0}},
    "time_reversal_getoor": {"replicas": 500, "grids": {"dt": 1e-3, "t_max": 20.0}},
}


def small(name, seed=0):
    return io.config_from_dict({"name": name, "seed": seed, **SMALL[name]})


@pytest.fixture(scope="module")
def reports():
    return {name: ex.run_experiment(small(name)) for name in io.EXPERIMENTS}


def test_every_runner_produces_a_report(reports):
    for name, rep in reports.items():
        assert rep.name == name
        assert rep.estimates and rep.verdicts
        assert rep.wall_time > 0
        assert rep.provenance["seed"] == 0
        for row in rep.estimates:
            assert set(row) == {"quantity", "param", "value", "se", "n"}
        for row in rep.verdicts:
            assert isinstance(row["passed"], bool) and math.isfinite(row["measured"])


def test_report_round_trip(reports, tmp_path):
    rep = reports["boundary_measure"]
    ex.write_report(rep, tmp_path / "r")
    back = ex.read_report(tmp_path / "r")
    assert back == rep
    assert ex.config_of(back) == small("boundary_measure")
    assert io.read_csv(tmp_path / "r" / "table_arcs.csv")["arc"].size == 16
    cols = list(io.read_csv(tmp_path / "r" / "verdicts.csv"))
    assert cols == ["criterion", "tolerance", "bound", "measured", "passed"]


def test_same_seed_same_files(tmp_path):
    cfg = small("ceps", seed=11)
    a = ex.write_report(ex.run_experiment(cfg), tmp_path / "a")
    b = ex.write_report(ex.run_experiment(cfg), tmp_path / "b")
    for f in ("report.json", "estimates.csv", "statistics.csv", "verdicts.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_different_seed_same_verdicts(reports):
    rep = ex.run_experiment(small("ceps", seed=5))
    assert rep.estimates != reports["ceps"].estimates
    for x, y in zip(rep.estimates, reports["ceps"].estimates):
        if x["quantity"] == "C_eps_tilt":
            assert abs(x["value"] - y["value"]) < 4 * math.hypot(x["se"], y["se"])
    ok = [v["passed"] for v in rep.verdicts if "agree" in v["criterion"]]
    assert ok == [v["passed"] for v in reports["ceps"].verdicts if "agree" in v["criterion"]]


def test_ceps_estimators_agree(reports):
    rep = reports["ceps"]
    for eps in (0.5, 0.2):
        a, b = rep.get("C_eps_tilt", eps), rep.get("C_eps_forest", eps)
        assert abs(a["value"] - b["value"]) < 3 * math.hypot(a["se"], b["se"])
        s = rep.get("scaled_C_eps_tilt", eps)
        assert s["value"] == pytest.approx(a["value"] / eps**2, rel=1e-15)


def test_boundary_measure_arcs_add_up(reports):
    rep = reports["boundary_measure"]
    for eps in (0.1, 0.05):
        tot = rep.get("scaled_tube_mass", eps)["value"]
        arcs = sum(rep.get("scaled_arc_mass", {"eps": eps, "arc": k})["value"] for k in range(8))
        assert arcs == pytest.approx(tot, rel=1e-12)
        shares = sum(rep.get("arc_share", {"eps": eps, "arc": k})["value"] for k in range(8))
        assert shares == pytest.approx(1.0, rel=1e-12)


def test_tv_bridge_profile_is_exact(reports):
    rep = reports["tv_bridge"]
    exact = [v for v in rep.verdicts if v["tolerance"] == "exact"]
    assert len(exact) == 2 and all(v["passed"] for v in exact)
    for eps in (0.4, 0.2):
        mc = rep.get("binned_l1", {"eps": eps, "t": 0.5})["value"]
        cf = rep.get("binned_l1_closed_form", {"eps": eps, "t": 0.5})["value"]
        assert 0 <= cf < 2 and 0 <= mc < 2
    acc = rep.get("acceptance", 0.4)
    assert 0 < acc["value"] <= 1


def test_kappa_is_mass_per_length(reports):
    rep = reports["kappa"]
    for w in ([0, 1], [0, 2]):
        m = rep.get("scaled_tube_mass", {"window": w, "eps": 0.05})["value"]
        k = rep.get("kappa", {"window": w, "eps": 0.05})["value"]
        assert k == pytest.approx(m / (w[1] - w[0]), rel=1e-12)
    assert any(r["quantity"] == "window_ratio" for r in rep.estimates)


def test_halfplane_report_contents(reports):
    rep = reports["halfplane_equiv"]
    tests = [s["test"] for s in rep.statistics]
    assert tests == ["ks ball volume bm vs bessel", "ks ball trace bm vs bessel",
                     "ks ball volume bm vs scaled-label bm"]
    for key in ("bm", "bessel", "bm_scaled"):
        v = rep.get("ball_volume", {"construction": key, "r": 0.3})
        assert v["value"] > 0 and v["n"] == 10


def test_halfplane_guard_aborts():
    cfg = io.config_from_dict({**{"name": "halfplane_equiv"}, **SMALL["halfplane_equiv"],
                               "windows": [[-1, 1]], "options": {"saturation_tol": 0.0}})
    with pytest.raises(ex.ExperimentAbort, match="enlarge the window"):
        ex.run_experiment(cfg)


def test_time_reversal_unfinished_fraction_small(reports):
    rep = reports["time_reversal_getoor"]
    for eps in (0.2, 0.0):
        assert rep.get("hitting_unfinished", eps)["value"] < 0.05
    assert len([s for s in rep.statistics if s["test"].startswith("ks2")]) == 1


def test_threads_do_not_change_results():
    cfg = small("kappa")
    threaded = io.config_from_dict({**cfg.as_dict(), "threads": 2})
    a = ex.run_experiment(cfg)
    b = ex.run_experiment(threaded)
    assert a.estimates == b.estimates


def test_read_report_missing(tmp_path):
    with pytest.raises(io.IOFailure):
        ex.read_report(tmp_path / "nothing")


def test_per_replica_estimate_se():
    rep = ex.ExperimentReport("ceps", {})
    row = rep.estimate("x", 0.1, values=[1.0, 2.0, 3.0, 4.0])
    assert row["value"] == 2.5
    assert row["se"] == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert row["param"] == "0.1"
    assert rep.get("x", 0.1) is row
    with pytest.raises(KeyError):
        rep.get("x", 0.2)
