"""Simulation and verification laboratory for watermelon path ensembles.

A watermelon is a family of p mutually non-touching +-1-step lattice paths
of common even length, pinned at both ends to the heights 0, 2, ..., 2p-2,
optionally constrained to stay nonnegative (the wall condition).  The
package provides

* exact integer counting of watermelons and stars (free-endpoint families),
* exact uniform sampling of discrete watermelons,
* the continuum limit laws: marginal densities, random-matrix samplers,
  and the limiting interacting SDEs,
* closed-form moment formulas for two-branch ensembles, and
* a deterministic statistical verification suite tying all of it together.
"""

__version__ = "0.1.0"

__all__ = [
    "exact_count",
    "discrete_walk",
    "spectral_laws",
    "sde_sim",
    "moments",
    "stats_verify",
    "cli",
]
