"""A short walk through the library: densities, path samplers, a disk and its metric.

    python3 demos/tour.py
"""

import math

import numpy as np

from brownian_disks import densities, forest, metric, paths
from brownian_disks.rng import RngStream

stream = RngStream(2024)

# closed forms
print("r_1(1, 0.2) =", densities.neg1_first_passage_density(1.0, 1.0, 0.2))
print("Getoor density at t=1, x=1:", densities.neg1_first_passage_density(1.0, 1.0, 0.0))
print("snake measure of {minimum < -1} =", densities.snake_min_tail(-1.0))
print("tilt normalizer C_0.1 / 0.1^2 =", densities.tilt_normalizer(0.1) / 0.01)

# the tilted excursion: eps + e^eps at t=1/2 against the 5-Bessel bridge midpoint
acc, used = paths.tilted_excursion_batch(0.1, 512, 2000, stream.generator(1))
mid = 0.1 + acc[:, 256]
bridge = paths.bessel5_bridge_batch(0.0, 1.0, 512, 2000, stream.generator(2))[:, 256]
print(f"\ntilted excursion: acceptance {2000 / used:.4f} (about 3 eps^2 = 0.03)")
print(f"midpoint mean {mid.mean():.4f} vs bridge {bridge.mean():.4f} (exact {0.5 * math.sqrt(2) * math.gamma(3) / math.gamma(2.5):.4f})")

# a boundary-pointed disk: distances from the zero-label point are the labels
c = forest.build_disk("boundary-pointed", 1024, 1e-5, 2000, stream.child(3))
zero = forest.forest_argmin(c)
f = metric.sssp(c, None, [zero])
print(f"\nboundary-pointed disk: {c.size} sites, volume {c.total_weight:.4f}")
print("max |D(0, .) - label| =", float(np.max(np.abs(f.values - c.label))))

# a free pointed disk: tube around the boundary
d = forest.build_disk("pointed", 1024, 1e-5, 2000, stream.child(4))
bd = metric.boundary_distance(d, max_dist=0.2)
for eps in (0.2, 0.1, 0.05):
    print(f"eps={eps}: eps^-2 tube volume {metric.tubular_volume(d, bd, eps) / eps**2:.2f}")
