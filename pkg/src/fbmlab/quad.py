"""Cached Gauss rules on [0, 1] for power-weighted and smooth integrands."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=256)
def jacobi_unit(n: int, right_exp: float, left_exp: float):
    """Nodes/weights v, w with sum w*g(v) = int_0^1 (1-v)^a v^b g(v) dv.

    right_exp = a (exponent at v=1), left_exp = b (exponent at v=0);
    both must exceed -1.
    """
    x, w = roots_jacobi(n, right_exp, left_exp)
    v = 0.5 * (x + 1.0)
    w = w * 0.5 ** (right_exp + left_exp + 1.0)
    v.setflags(write=False)
    w.setflags(write=False)
    return v, w


@lru_cache(maxsize=64)
def legendre_unit(n: int):
    """Nodes/weights on [0, 1] for smooth integrands."""
    x, w = roots_legendre(n)
    v = 0.5 * (x + 1.0)
    w = 0.5 * w
    v.setflags(write=False)
    w.setflags(write=False)
    return v, w


def trapezoid_weights(n_nodes: int, dt: float) -> np.ndarray:
    """Composite trapezoid weights for n_nodes equally spaced samples."""
    w = np.full(n_nodes, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def simpson_weights(n_nodes: int, dx: float) -> np.ndarray:
    """Composite Simpson weights; n_nodes must be odd (even cell count)."""
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("Simpson rule needs an odd number of nodes")
    w = np.ones(n_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (dx / 3.0)
