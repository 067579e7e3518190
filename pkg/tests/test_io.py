import json

import numpy as np
import pytest

from brownian_disks import forest, io
from brownian_disks.rng import RngStream, as_generator, as_stream


# ---------------------------------------------------------------- streams


def test_streams_are_reproducible_and_keyed():
    a = RngStream(5).generator(1, 2).standard_normal(4)
    b = RngStream(5).generator(1, 2).standard_normal(4)
    c = RngStream(5).generator(2, 1).standard_normal(4)
    d = RngStream(5, 1).generator(1, 2).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    np.testing.assert_array_equal(RngStream(5).child(1).generator(2).standard_normal(4), a)


def test_stream_coercion():
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    np.testing.assert_array_equal(as_generator(3).random(3), RngStream(3).generator().random(3))
    assert as_stream(4) == RngStream(4)
    with pytest.raises(TypeError):
        as_generator("seed")
    with pytest.raises(TypeError):
        as_stream(g)
    with pytest.raises(ValueError):
        RngStream(-1)


# ---------------------------------------------------------------- configs


def test_minimal_config_gets_defaults(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("name: kappa\n")
    cfg = io.load_config(p)
    assert cfg.replicas == io.DEFAULTS["kappa"]["replicas"]
    assert cfg.windows == ((0, 1), (0, 2))
    assert cfg.tolerances["kappa_lo"] == 0.5


def test_every_default_config_validates():
    for name in io.EXPERIMENTS:
        cfg = io.default_config(name)
        assert io.config_from_dict(cfg.as_dict()) == cfg


def test_misspelled_key_is_named(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("name: ceps\nreplicsa: 5\n")
    with pytest.raises(io.ConfigError, match="replicsa"):
        io.load_config(p)
    with pytest.raises(io.ConfigError, match="grids.n_bse"):
        io.config_from_dict({"name": "kappa", "grids": {"n_bse": 64}})


@pytest.mark.parametrize("raw,key", [
    ({"name": "ceps", "replicas": 0}, "replicas"),
    ({"name": "ceps", "replicas": "many"}, "replicas"),
    ({"name": "ceps", "replicas": 2.5}, "replicas"),
    ({"name": "ceps", "eps": []}, "eps"),
    ({"name": "ceps", "eps": [0.7]}, "eps"),
    ({"name": "tv_bridge", "delta": [0.5]}, "delta"),
    ({"name": "kappa", "windows": [[1, 0]]}, "windows"),
    ({"name": "halfplane_equiv", "radius": [0.0]}, "radius"),
    ({"name": "time_reversal_getoor", "eps": [1.0]}, "eps"),
    ({"name": "kappa", "grids": {"sigma_min": 0.0}}, "grids.sigma_min"),
    ({"name": "nope"}, "name"),
    ({}, "name"),
])
def test_constraint_errors_name_the_key(raw, key):
    with pytest.raises(io.ConfigError, match=key.replace(".", r"\.")):
        io.config_from_dict(raw)


def test_config_numeric_coercion():
    cfg = io.config_from_dict({"name": "ceps", "replicas": 10.0, "grids": {"path_n": 64}})
    assert cfg.replicas == 10 and isinstance(cfg.replicas, int)
    cfg = io.config_from_dict({"name": "kappa", "grids": {"m_per_unit": 100}})
    assert cfg.grids["m_per_unit"] == 100.0 and isinstance(cfg.grids["m_per_unit"], float)


def test_config_io_errors(tmp_path):
    with pytest.raises(io.IOFailure):
        io.load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: [unclosed\n")
    with pytest.raises(io.ConfigError):
        io.load_config(bad)
    js = tmp_path / "c.json"
    js.write_text(json.dumps({"name": "ceps", "eps": [0.2]}))
    assert io.load_config(js).eps == (0.2,)


def test_default_outdir(monkeypatch, tmp_path):
    monkeypatch.setenv(io.OUTDIR_ENV, str(tmp_path))
    assert io.default_outdir() == tmp_path


# ---------------------------------------------------------------- CSV


def test_empty_table_is_header_only(tmp_path):
    p = tmp_path / "e.csv"
    io.emit_csv([], p, columns=["a", "b"])
    assert p.read_bytes() == b"a,b\n"
    io.emit_csv({"x": [], "y": []}, p)
    assert p.read_bytes() == b"x,y\n"


def test_csv_round_trip_bit_exact(tmp_path):
    g = np.random.default_rng(3)
    vals = np.concatenate([g.standard_normal(200) * 10.0 ** g.integers(-300, 300, 200),
                           [0.1, 1 / 3, 5e-324, 1.7976931348623157e308, -0.0]])
    p = tmp_path / "r.csv"
    io.emit_csv({"v": vals, "i": np.arange(vals.size)}, p)
    back = io.read_csv(p)
    np.testing.assert_array_equal(back["v"], vals)
    np.testing.assert_array_equal(back["i"], np.arange(vals.size))
    text = p.read_text()
    assert "\r" not in text and text.endswith("\n")


def test_format_value():
    assert io.format_value(True) == "true"
    assert io.format_value(np.int64(3)) == "3"
    assert io.format_value(float("inf")) == "inf"
    assert io.format_value(float("nan")) == "nan"
    assert io.format_value(None) == ""
    assert float(io.format_value(0.1)) == 0.1


def test_csv_write_failure(tmp_path):
    with pytest.raises(io.IOFailure):
        io.emit_csv({"a": [1]}, tmp_path / "no" / "such" / "dir.csv")


# ---------------------------------------------------------------- cycles


def test_cycle_round_trip(tmp_path):
    c = forest.build_halfplane_window("bessel", -1, 1, 64, 1e-3, 300, RngStream(3))
    p = tmp_path / "w.bin"
    io.save_cycle(c, p)
    d = io.load_cycle(p)
    for f in ("label", "weight", "is_boundary", "base_coord", "tree_id"):
        np.testing.assert_array_equal(getattr(d, f), getattr(c, f))
    for f in ("topology", "kind", "window", "base_length", "base_spacing", "sigma_min"):
        assert getattr(d, f) == getattr(c, f)
    header = json.loads((tmp_path / "w.bin.json").read_text())
    assert header["sites"] == c.size and header["format"] == io.CYCLE_FORMAT
    assert header["truncation"]["sigma_min"] == 1e-3


def test_cycle_load_errors(tmp_path):
    c = forest.synthetic_cycle([0.0, 1.0, 2.0])
    p = tmp_path / "c.bin"
    io.save_cycle(c, p)
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(io.ConfigError, match="truncated"):
        io.load_cycle(p)
    with pytest.raises(io.IOFailure):
        io.load_cycle(tmp_path / "absent.bin")
    io.save_cycle(c, p)
    h = json.loads((tmp_path / "c.bin.json").read_text())
    h["format"] = "other"
    (tmp_path / "c.bin.json").write_text(json.dumps(h))
    with pytest.raises(io.ConfigError):
        io.load_cycle(p)
