"""Configuration files, CSV tables and cycle serialization."""

from __future__ import annotations

import copy
import csv
import io as _io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .forest import LabeledCycle

OUTDIR_ENV = "BROWNIAN_DISKS_OUT"


class ConfigError(ValueError):
    """Invalid configuration (unknown key, wrong type, violated constraint)."""


class IOFailure(OSError):
    """File could not be read or written."""


# ---------------------------------------------------------------- experiment configs

_COMMON = {
    "seed": 20240601,
    "threads": 1,
}

# Every experiment's full default config.  A key that does not appear here
# is rejected when loading a file.
DEFAULTS = {
    "ceps": {
        "replicas": 200_000,
        "eps": [0.5, 0.2, 0.1],
        "grids": {"path_n": 2048},
        "options": {"forest_replicas": 200_000, "block": 4096},
        "tolerances": {"joint_se": 3.0, "scaled_lo": 2.0, "scaled_hi": 4.0},
    },
    "boundary_measure": {
        "replicas": 200,
        "eps": [0.1, 0.05],
        "grids": {"n_base": 1024, "sigma_min": 1e-6, "m_per_unit": 2000.0, "max_tree_sites": 65536},
        "options": {"arcs": 8},
        "tolerances": {"mass_lo": 0.5, "mass_hi": 1.5, "arc_rel": 0.25, "joint_se": 3.0},
    },
    "tv_bridge": {
        "replicas": 10_000,
        "eps": [0.4, 0.2, 0.1],
        "delta": [0.25],
        "grids": {"path_n": 1024, "n_base": 64, "sigma_min": 1e-3, "m_per_unit": 200.0,
                  "max_tree_sites": 4096},
        "options": {"bins": 40, "profile_replicas": 10_000},
        "tolerances": {"l1_max": 0.15, "chi2_p": 0.01, "exact": 1e-12},
    },
    "kappa": {
        "replicas": 200,
        "eps": [0.1, 0.05],
        "windows": [[0, 1], [0, 2]],
        "grids": {"n_base": 1024, "sigma_min": 1e-6, "m_per_unit": 2000.0, "max_tree_sites": 65536},
        "options": {"pad": 1},
        "tolerances": {"kappa_lo": 0.5, "kappa_hi": 1.5, "ratio_lo": 1.6, "ratio_hi": 2.4, "joint_se": 3.0},
    },
    "halfplane_equiv": {
        "replicas": 500,
        "radius": [0.3],
        "windows": [[-6, 6]],
        "grids": {"n_base": 256, "sigma_min": 1e-6, "m_per_unit": 2000.0, "max_tree_sites": 65536},
        "options": {"control_scale": 1.3, "saturation_tol": 0.05},
        "tolerances": {"ks_p": 0.01},
    },
    "time_reversal_getoor": {
        "replicas": 100_000,
        "eps": [0.2, 0.0],
        "grids": {"dt": 1e-4, "t_max": 50.0},
        "options": {"x": 1.0, "crossing_correction": True},
        "tolerances": {"ks_max": 0.02, "ks_p": 0.01},
    },
}

EXPERIMENTS = tuple(DEFAULTS)


def _typename(v):
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, (int, float)):
        return "number"
    if isinstance(v, str):
        return "string"
    if isinstance(v, list):
        return "list"
    if isinstance(v, dict):
        return "mapping"
    return type(v).__name__


def _merge(default, given, path):
    out = copy.deepcopy(default)
    for key, val in given.items():
        name = f"{path}{key}"
        if key not in default:
            raise ConfigError(f"unknown config key '{name}'")
        ref = default[key]
        if isinstance(ref, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key '{name}' must be a mapping")
            out[key] = _merge(ref, val, name + ".")
            continue
        if _typename(ref) != _typename(val):
            raise ConfigError(f"config key '{name}' must be a {_typename(ref)}, got {_typename(val)}")
        if isinstance(ref, int) and not isinstance(ref, bool) and isinstance(val, float):
            if not val.is_integer():
                raise ConfigError(f"config key '{name}' must be an integer")
            val = int(val)
        if isinstance(ref, float) and isinstance(val, int):
            val = float(val)
        out[key] = val
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    replicas: int
    threads: int = 1
    eps: tuple = ()
    delta: tuple = ()
    radius: tuple = ()
    windows: tuple = ()
    grids: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {"name": self.name, "seed": self.seed, "replicas": self.replicas, "threads": self.threads}
        for key in ("eps", "delta", "radius"):
            if getattr(self, key):
                d[key] = list(getattr(self, key))
        if self.windows:
            d["windows"] = [list(w) for w in self.windows]
        d["grids"] = dict(self.grids)
        d["options"] = dict(self.options)
        d["tolerances"] = dict(self.tolerances)
        return d


def _validate(cfg: dict) -> None:
    if cfg["replicas"] < 1:
        raise ConfigError("config key 'replicas' must be >= 1")
    if cfg["threads"] < 1:
        raise ConfigError("config key 'threads' must be >= 1")
    if cfg["seed"] < 0:
        raise ConfigError("config key 'seed' must be nonnegative")
    for key in ("eps", "delta", "radius", "windows"):
        if key in cfg and len(cfg[key]) == 0:
            raise ConfigError(f"config key '{key}' must be a nonempty list")
    name = cfg["name"]
    eps = cfg.get("eps", [])
    if name in ("ceps", "tv_bridge") and not all(0 < e <= 0.5 for e in eps):
        raise ConfigError("config key 'eps' must lie in (0, 0.5]")
    if name in ("boundary_measure", "kappa") and not all(e > 0 for e in eps):
        raise ConfigError("config key 'eps' must be positive")
    if name == "time_reversal_getoor":
        x = cfg["options"]["x"]
        if not all(0 <= e < x for e in eps):
            raise ConfigError("config key 'eps' must satisfy 0 <= eps < options.x")
    for d in cfg.get("delta", []):
        if not 0 < d < 0.5:
            raise ConfigError("config key 'delta' must lie in (0, 1/2)")
    for r in cfg.get("radius", []):
        if r <= 0:
            raise ConfigError("config key 'radius' must be positive")
    for w in cfg.get("windows", []):
        if len(w) != 2 or not all(float(v).is_integer() for v in w) or not w[0] < w[1]:
            raise ConfigError("config key 'windows' needs integer pairs [a, b] with a < b")
    g = cfg["grids"]
    for key in ("n_base", "path_n", "max_tree_sites"):
        if key in g and g[key] < 8:
            raise ConfigError(f"config key 'grids.{key}' must be >= 8")
    for key in ("sigma_min", "m_per_unit", "dt", "t_max"):
        if key in g and not g[key] > 0:
            raise ConfigError(f"config key 'grids.{key}' must be positive")


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if "name" not in raw:
        raise ConfigError("config key 'name' is required")
    name = raw["name"]
    if name not in DEFAULTS:
        raise ConfigError(f"unknown experiment '{name}' in config key 'name'")
    default = {"name": name, **copy.deepcopy(_COMMON), **copy.deepcopy(DEFAULTS[name])}
    cfg = _merge(default, raw, "")
    _validate(cfg)
    return ExperimentConfig(
        name=name,
        seed=int(cfg["seed"]),
        replicas=int(cfg["replicas"]),
        threads=int(cfg["threads"]),
        eps=tuple(float(e) for e in cfg.get("eps", ())),
        delta=tuple(float(d) for d in cfg.get("delta", ())),
        radius=tuple(float(r) for r in cfg.get("radius", ())),
        windows=tuple(tuple(int(v) for v in w) for w in cfg.get("windows", ())),
        grids=cfg["grids"],
        options=cfg["options"],
        tolerances=cfg["tolerances"],
    )


def default_config(name: str, **overrides) -> ExperimentConfig:
    return config_from_dict({"name": name, **overrides})


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) experiment config and fill in defaults."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(raw if raw is not None else {})


def default_outdir() -> Path:
    return Path(os.environ.get(OUTDIR_ENV, "."))


# ---------------------------------------------------------------- CSV


def format_value(v) -> str:
    """CSV text of one cell (floats with 17 significant digits)."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def emit_csv(table, path, columns=None) -> None:
    """Write rows (a list of dicts, or a dict of equal-length columns) as CSV.

    Floats are written with 17 significant digits so they parse back to the
    same doubles.
    """
    if isinstance(table, dict):
        columns = list(table) if columns is None else list(columns)
        n = len(next(iter(table.values()))) if table else 0
        rows = [[table[c][i] for c in columns] for i in range(n)]
    else:
        rows_d = list(table)
        if columns is None:
            if not rows_d:
                raise ValueError("columns are required for an empty row list")
            columns = list(rows_d[0])
        rows = [[r.get(c) for c in columns] for r in rows_d]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(v) for v in r])
    try:
        Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path) -> dict:
    """Columns of a CSV written by :func:`emit_csv` (numbers parsed as floats when possible)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror or exc}") from exc
    rows = list(csv.reader(_io.StringIO(text)))
    header, body = rows[0], rows[1:]
    out = {}
    for j, c in enumerate(header):
        col = [r[j] for r in body]
        try:
            out[c] = np.array([float(v) for v in col])
        except ValueError:
            out[c] = col
    return out


# ---------------------------------------------------------------- cycles

CYCLE_FORMAT = "labeled-cycle/1"
_RECORD = np.dtype([("label", "<f8"), ("weight", "<f8"), ("base_coord", "<f8"),
                    ("tree_id", "<i8"), ("is_boundary", "u1")])


def save_cycle(cycle: LabeledCycle, path) -> None:
    """Write ``path`` (packed little-endian site records) and ``path + '.json'`` (header)."""
    path = Path(path)
    header = {
        "format": CYCLE_FORMAT,
        "topology": cycle.topology,
        "kind": cycle.kind,
        "sites": int(cycle.size),
        "boundary_sites": int(cycle.is_boundary.sum()),
        "trees": int(cycle.n_trees),
        "base_length": float(cycle.base_length),
        "base_spacing": float(cycle.base_spacing),
        "window": [float(w) for w in cycle.window],
        "truncation": {"sigma_min": float(cycle.sigma_min)},
        "record": [[name, _RECORD[name].str] for name in _RECORD.names],
    }
    rec = np.empty(cycle.size, dtype=_RECORD)
    rec["label"] = cycle.label
    rec["weight"] = cycle.weight
    rec["base_coord"] = cycle.base_coord
    rec["tree_id"] = cycle.tree_id
    rec["is_boundary"] = cycle.is_boundary
    try:
        path.write_bytes(rec.tobytes())
        Path(str(path) + ".json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n",
                                            encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


def load_cycle(path) -> LabeledCycle:
    path = Path(path)
    try:
        header = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
        data = path.read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror or exc}") from exc
    if header.get("format") != CYCLE_FORMAT:
        raise ConfigError(f"{path}: unsupported cycle format {header.get('format')!r}")
    if len(data) % _RECORD.itemsize:
        raise ConfigError(f"{path}: truncated site records")
    rec = np.frombuffer(data, dtype=_RECORD)
    if rec.size != header["sites"]:
        raise ConfigError(f"{path}: header announces {header['sites']} sites, file holds {rec.size}")
    return LabeledCycle(header["topology"], rec["label"].copy(), rec["weight"].copy(),
                        rec["is_boundary"].astype(bool), rec["base_coord"].copy(), rec["tree_id"].copy(),
                        header["base_length"], header["base_spacing"], header["truncation"]["sigma_min"],
                        header["kind"], tuple(header["window"]))
