"""Numerical laboratory for fBm-driven SDEs with singular drift.

Subpackages cover uniform time grids and seeded randomness (core),
Riemann-Liouville fractional calculus (fraccalc), the Volterra kernel
of fractional Brownian motion and its transforms (kernel), fBm path
sampling (fbm), shuffle-permutation identities (shuffle), the truncated
local-time field and its bounds (localtime), measure changes (girsanov),
Euler schemes for additive-noise SDEs (sde), and variational/Malliavin
flow diagnostics (flowlab).
"""

__version__ = "0.1.0"
