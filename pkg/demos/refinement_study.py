"""Grid refinement of the two functionals that miss their bands at desk scale.

Part 1 tracks eps^-2 times the tubular volume of the boundary of free
pointed disks (target 1) over three grids.  Part 2 tracks the mean
boundary trace of the radius-0.3 ball around the root of a half-plane
window in both constructions; the exact value is 2 (0.3/sqrt 3)^2 / 3.

The finest grids take minutes per replica; ``--quick`` keeps only the
first two levels of each part.

    python3 demos/refinement_study.py --replicas 20 --quick
"""

import argparse
import math
import time

import numpy as np

from brownian_disks import forest, metric
from brownian_disks.rng import RngStream

DISK_GRIDS = [(1024, 1e-6, 2000.0), (4096, 1e-7, 8000.0), (16384, 1e-8, 32000.0)]
HALFPLANE_GRIDS = [(256, 1e-6, 2000.0), (512, 1e-6, 4000.0), (1024, 1e-6, 8000.0)]
EPS = (0.1, 0.05)
RADIUS = 0.3


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return x.mean(), x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else float("nan")


def disk_level(n_base, sigma_min, mpu, replicas, seed):
    scaled = {e: [] for e in EPS}
    sizes = []
    stream = RngStream(seed)
    for r in range(replicas):
        c = forest.build_disk("pointed", n_base, sigma_min, mpu, stream.child(r), max_tree_sites=65536)
        f = metric.boundary_distance(c, max_dist=max(EPS))
        for e in EPS:
            scaled[e].append(metric.tubular_volume(c, f, e) / e**2)
        sizes.append(c.size)
    return np.mean(sizes), {e: mean_se(v) for e, v in scaled.items()}


def halfplane_level(kind, n_base, sigma_min, mpu, replicas, seed, a=6):
    traces = []
    stream = RngStream(seed)
    for r in range(replicas):
        c = forest.build_halfplane_window(kind, -a, a, n_base, sigma_min, mpu, stream.child(r),
                                          max_tree_sites=65536)
        root = int(np.flatnonzero(c.is_boundary & (c.base_coord == 0.0))[0])
        traces.append(metric.ball(c, None, root, RADIUS).boundary_trace_length)
    return mean_se(traces)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicas", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true", help="skip the finest grid of each part")
    args = ap.parse_args()
    levels = 2 if args.quick else 3

    print("free pointed disk: eps^-2 tubular volume (target 1)")
    print(f"{'n_base':>7} {'sigma_min':>9} {'mpu':>7} {'sites':>9}" + "".join(f"  eps={e:<14}" for e in EPS))
    for nb, smin, mpu in DISK_GRIDS[:levels]:
        t0 = time.perf_counter()
        n, res = disk_level(nb, smin, mpu, args.replicas, args.seed)
        cols = "".join(f"  {m:7.2f} +- {s:5.2f}" for m, s in res.values())
        print(f"{nb:7d} {smin:9.0e} {mpu:7.0f} {n:9.0f}{cols}   ({time.perf_counter() - t0:.0f}s)")

    exact = 2.0 * (RADIUS / math.sqrt(3.0)) ** 2 / 3.0
    print(f"\nhalf-plane window [-6, 6]: mean boundary trace of ball(root, {RADIUS}); exact {exact:.4f}")
    for nb, smin, mpu in HALFPLANE_GRIDS[:levels]:
        row = []
        for kind in ("bm", "bessel"):
            m, s = halfplane_level(kind, nb, smin, mpu, args.replicas, args.seed)
            row.append(f"{kind}: {m:.4f} +- {s:.4f}")
        print(f"n_base {nb:5d} mpu {mpu:6.0f}   " + "   ".join(row))


if __name__ == "__main__":
    main()
