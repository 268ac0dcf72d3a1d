"""Nested Gauss-Jacobi quadrature over ordered simplices with power weights.

Computes integrals of the form

    int_{theta < s_1 < ... < s_q < t} prod_j kappa_j(s_j) (s_j - s_{j-1})^{w_j} ds

with s_0 = theta.  Each factor kappa_j is supplied as a pair
(theta_exponent e_j, smooth part g_j) meaning kappa_j(s) = (s - theta)^{e_j} g_j(s).
Integrating from the innermost variable outward, the integral over
theta < s_1 < ... < s_j < tau equals (tau - theta)^{P_j} W_j(tau) with a known
exponent ladder P_j, so every level is a two-sided Jacobi rule on [0, 1]:
exact for polynomial smooth parts, spectrally accurate for analytic ones.
"""

from __future__ import annotations

import numpy as np

from .quad import jacobi_unit


def _const_one(s):
    return np.ones_like(np.asarray(s, dtype=float))


def unit_factor() -> tuple[float, "callable"]:
    """kappa == 1."""
    return (0.0, _const_one)


def simplex_power_integral(theta, t, gap_weights, factors, n_nodes: int = 24) -> float:
    """See the module docstring.

    gap_weights = [w_1, ..., w_q]; factors[j] = (e_{j+1}, g_{j+1}).  The
    bottom weight w_1 anchors at theta and is folded into the innermost
    level's Jacobi exponent; each later w_j couples levels j-1 and j and
    appears as the right-hand exponent of level j-1.  Requires every
    accumulated left exponent and every w_j to exceed -1.
    """
    theta = float(theta)
    t = float(t)
    if not theta < t:
        raise ValueError("need theta < t")
    q = len(gap_weights)
    if len(factors) != q:
        raise ValueError("one factor per level required")
    gap_weights = [float(w) for w in gap_weights]

    powers: list[tuple[float, float]] = []
    p_prev = 0.0
    for j in range(q):
        e_j = float(factors[j][0])
        left = e_j + (gap_weights[0] if j == 0 else p_prev)
        right = gap_weights[j + 1] if j + 1 < q else 0.0
        if left <= -1.0 or right <= -1.0:
            raise ValueError(
                f"non-integrable singularity at level {j + 1}: "
                f"left exponent {left}, right exponent {right}"
            )
        powers.append((left, right))
        p_prev = left + right + 1.0

    def level(j: int, taus: np.ndarray) -> np.ndarray:
        left, right = powers[j]
        v, w = jacobi_unit(n_nodes, right, left)
        s = theta + (taus[..., None] - theta) * v
        g = factors[j][1](s)
        if j > 0:
            g = g * level(j - 1, s)
        return np.einsum("...n,n->...", g, w)

    return float((t - theta) ** p_prev * level(q - 1, np.asarray(t, dtype=float)))
