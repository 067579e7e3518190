"""Random disks and half-planes built from labeled Poisson forests.

Submodules: :mod:`paths` (path samplers), :mod:`densities` (closed-form
laws), :mod:`forest` (labeled explorations), :mod:`metric` (quotient
distances), :mod:`experiments` (Monte Carlo campaigns), :mod:`io` and
:mod:`cli`.
"""

__version__ = "0.1.0"
