"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime or statistical
abort, 4 I/O failure.  Errors go to stderr as one JSON line
``{"error": <kind>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import inspect
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import densities, experiments, forest, metric
from .io import (EXPERIMENTS, ConfigError, IOFailure, config_from_dict, default_outdir, emit_csv,
                 format_value, load_config, load_cycle, save_cycle)
from .paths import BudgetExceeded, ResamplingFailure
from .rng import RngStream

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("brownian_disks")

DENSITY_FUNCTIONS = {name: getattr(densities, name) for name in densities.__all__
                     if callable(getattr(densities, name))}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits on its own; route its errors through our error contract instead
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="brownian-disks", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    for name, kinds in (("sample-disk", forest.DISK_KINDS), ("sample-halfplane", forest.HALFPLANE_KINDS)):
        s = sub.add_parser(name, help=f"sample a discretized {'disk' if 'disk' in name else 'half-plane window'}")
        s.add_argument("--kind", choices=kinds, required=True)
        s.add_argument("--n-base", type=int, default=1024,
                       help="boundary sites (per unit length for half-plane windows)")
        s.add_argument("--sigma-min", type=float, default=1e-4)
        s.add_argument("--m-per-unit", type=float, default=2000.0)
        s.add_argument("--max-tree-sites", type=int, default=forest.MAX_TREE_SITES)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", required=True)
        if name == "sample-halfplane":
            s.add_argument("--window", type=int, nargs=2, metavar=("A", "B"), default=(-1, 1))

    d = sub.add_parser("density", help="closed-form densities")
    dsub = d.add_subparsers(dest="action", parser_class=_Parser)
    ev = dsub.add_parser("eval", help="evaluate a density; other --name value pairs are its arguments")
    ev.add_argument("--fn", required=True, choices=sorted(DENSITY_FUNCTIONS))
    ev.add_argument("--out", help="CSV file for the grid of values (default: stdout)")
    dsub.add_parser("list", help="list the available functions")

    ds = sub.add_parser("distance", help="distance field on a serialized cycle, as CSV")
    ds.add_argument("--cycle", required=True)
    ds.add_argument("--source", default="boundary",
                    help="'boundary', 'argmin', or a comma-separated list of site indices")
    ds.add_argument("--max-dist", type=float, default=None)
    ds.add_argument("--out", help="CSV path (default: stdout)")

    e = sub.add_parser("experiment", help="Monte Carlo campaigns")
    esub = e.add_subparsers(dest="action", parser_class=_Parser)
    esub.add_parser("list", help="list experiment names")
    run = esub.add_parser("run", help="run one experiment and write its report")
    run.add_argument("name", choices=EXPERIMENTS)
    run.add_argument("--config", help="YAML or JSON config; flags override its values")
    run.add_argument("--out", help=f"report directory (default: ${{BROWNIAN_DISKS_OUT}}/<name>)")
    run.add_argument("--seed", type=int)
    run.add_argument("--replicas", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--strict", action="store_true", help="exit 3 when a verdict fails")
    return p


def _parse_value(text):
    return [float(v) for v in text.split(",")]


def _density_eval(args, extra) -> int:
    fn = DENSITY_FUNCTIONS[args.fn]
    params = inspect.signature(fn).parameters
    given = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument '{tok}'")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            val = next(it, None)
            if val is None:
                raise ConfigError(f"argument '--{key}' needs a value")
        if key not in params:
            raise ConfigError(f"function {args.fn} has no argument '{key}'")
        if key in ("kind",):
            given[key] = [val]
        elif key in ("printed", "normalized", "y_infinite"):
            given[key] = [val.lower() in ("1", "true", "yes")]
        else:
            try:
                given[key] = _parse_value(val)
            except ValueError:
                raise ConfigError(f"argument '--{key}' must be a number or comma-separated numbers") from None
    missing = [k for k, p in params.items() if p.default is inspect.Parameter.empty and k not in given]
    if missing:
        raise ConfigError(f"function {args.fn} needs --{missing[0].replace('_', '-')}")
    keys = list(given)
    rows = []
    for combo in itertools.product(*(given[k] for k in keys)):
        kw = dict(zip(keys, combo))
        val = fn(**kw)
        rows.append({**kw, "value": float(np.asarray(val))})
    if args.out:
        emit_csv(rows, args.out, columns=keys + ["value"])
    elif len(rows) == 1:
        print(repr(rows[0]["value"]))
    else:
        cols = keys + ["value"]
        sys.stdout.write(",".join(cols) + "\n")
        for r in rows:
            sys.stdout.write(",".join(format_value(r[k]) for k in cols) + "\n")
    return EXIT_OK


def _sample(args) -> int:
    stream = RngStream(args.seed)
    if args.command == "sample-disk":
        c = forest.build_disk(args.kind, args.n_base, args.sigma_min, args.m_per_unit, stream,
                              max_tree_sites=args.max_tree_sites)
    else:
        a, b = args.window
        c = forest.build_halfplane_window(args.kind, a, b, args.n_base, args.sigma_min, args.m_per_unit, stream,
                                          max_tree_sites=args.max_tree_sites)
    save_cycle(c, args.out)
    log.info("wrote %d sites (%d trees) to %s", c.size, c.n_trees, args.out)
    return EXIT_OK


def _distance(args) -> int:
    c = load_cycle(args.cycle)
    if args.source == "boundary":
        f = metric.boundary_distance(c, max_dist=args.max_dist)
    else:
        if args.source == "argmin":
            src = [forest.forest_argmin(c)]
        else:
            try:
                src = [int(s) for s in args.source.split(",")]
            except ValueError:
                raise ConfigError("--source must be 'boundary', 'argmin' or site indices") from None
            if min(src) < 0 or max(src) >= c.size:
                raise ConfigError(f"--source index out of range [0, {c.size})")
        f = metric.sssp(c, None, src, max_dist=args.max_dist)
    table = {
        "site_index": np.arange(c.size),
        "base_coord": c.base_coord,
        "label": c.label,
        "distance": f.values,
        "weight": c.weight,
    }
    if args.out:
        emit_csv(table, args.out)
    else:
        sys.stdout.write(",".join(table) + "\n")
        for i in range(c.size):
            sys.stdout.write(",".join(format_value(table[k][i]) for k in table) + "\n")
    return EXIT_OK


def _experiment(args) -> int:
    if args.action == "list":
        for name in EXPERIMENTS:
            print(name)
        return EXIT_OK
    if args.action != "run":
        raise _UsageError("experiment needs 'run' or 'list'")
    if args.config:
        cfg = load_config(args.config)
        if cfg.name != args.name:
            raise ConfigError(f"config file is for '{cfg.name}', not '{args.name}'")
        raw = cfg.as_dict()
    else:
        raw = {"name": args.name}
    for key in ("seed", "replicas", "threads"):
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    cfg = config_from_dict(raw)
    out = Path(args.out) if args.out else default_outdir() / args.name
    log.info("running %s (seed %d, %d replicas) into %s", cfg.name, cfg.seed, cfg.replicas, out)
    rep = experiments.run_experiment(cfg)
    experiments.write_report(rep, out)
    for v in rep.verdicts:
        print(f"{'PASS' if v['passed'] else 'FAIL'} {v['criterion']}: measured {v['measured']:.6g} "
              f"({v['tolerance']} {v['bound']})")
    if args.strict and not rep.passed:
        return EXIT_RUNTIME
    return EXIT_OK


def _fail(kind, message, code) -> int:
    line = json.dumps({"error": kind, "message": str(message).splitlines()[0] if str(message) else kind})
    print(line, file=sys.stderr)
    return code


def main(argv=None) -> int:
    """Parse ``argv`` and dispatch; returns the exit code."""
    parser = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, extra = parser.parse_known_args(argv)
        if extra and not (args.command == "density" and args.action == "eval"):
            raise _UsageError(f"unrecognized arguments: {' '.join(extra)}")
        if args.verbose:
            logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                                format="%(levelname)s %(message)s")
        if args.command is None:
            raise _UsageError("a command is required")
        if args.command in ("sample-disk", "sample-halfplane"):
            return _sample(args)
        if args.command == "density":
            if args.action == "list":
                for name in sorted(DENSITY_FUNCTIONS):
                    print(name)
                return EXIT_OK
            if args.action != "eval":
                raise _UsageError("density needs 'eval' or 'list'")
            return _density_eval(args, extra)
        if args.command == "distance":
            return _distance(args)
        return _experiment(args)
    except (_UsageError, ConfigError) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except (IOFailure, OSError) as exc:
        return _fail("io", exc, EXIT_IO)
    except (experiments.ExperimentAbort, BudgetExceeded, ResamplingFailure) as exc:
        return _fail("abort", exc, EXIT_RUNTIME)
    except (ValueError, IndexError, RuntimeError) as exc:
        return _fail("runtime", exc, EXIT_RUNTIME)
