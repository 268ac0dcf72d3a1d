"""Shuffle permutations and exact simplex-product identities.

All integrals here are iterated integrals of monomials over ordered
simplices, computed by exact rational antidifferentiation, so the
identities are checked to zero error rather than to a tolerance.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb

MAX_SHUFFLE_SIZE = 12


@dataclass(frozen=True)
class ShuffleSet:
    """All interleavings of blocks {1..m} and {m+1..m+n}.

    Each permutation sigma is stored as the tuple (sigma(1), ..., sigma(m+n));
    sigma is increasing on each block.
    """

    m: int
    n: int
    perms: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.perms)


def enumerate_shuffles(m: int, n: int) -> ShuffleSet:
    """Enumerate S(m, n) in lexicographic order of the permutation tuples."""
    if m < 0 or n < 0:
        raise ValueError("block sizes must be non-negative")
    if m + n > MAX_SHUFFLE_SIZE:
        raise ValueError(f"m + n capped at {MAX_SHUFFLE_SIZE}")
    total = m + n
    perms = []
    for first_block in combinations(range(1, total + 1), m):
        second_block = [v for v in range(1, total + 1) if v not in first_block]
        sigma = [0] * total
        for pos, val in enumerate(first_block):
            sigma[pos] = val
        for pos, val in enumerate(second_block):
            sigma[m + pos] = val
        perms.append(tuple(sigma))
    perms.sort()
    return ShuffleSet(m, n, tuple(perms))


# ---------------------------------------------------------------------------
# exact polynomial machinery (coefficient lists over Fraction)
# ---------------------------------------------------------------------------


def _poly_mul(p: list[Fraction], q: list[Fraction]) -> list[Fraction]:
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] += a * b
    return out


def _poly_antiderivative(p: list[Fraction]) -> list[Fraction]:
    return [Fraction(0)] + [c / (k + 1) for k, c in enumerate(p)]


def _poly_eval(p: list[Fraction], x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * x + c
    return acc


def _monomial(exponent: int) -> list[Fraction]:
    return [Fraction(0)] * exponent + [Fraction(1)]


def simplex_poly_integral(polys: list[list[Fraction]], theta: Fraction, t: Fraction) -> Fraction:
    """Iterated integral of prod_j p_j(s_j) over theta < s_q < ... < s_1 < t.

    polys[0] attaches to the outermost (largest) variable.  Integration runs
    from the innermost variable outward; every step stays polynomial.
    """
    inner = [Fraction(1)]
    for p in reversed(polys[1:] if polys else []):
        anti = _poly_antiderivative(_poly_mul(p, inner))
        inner = [c for c in anti]
        inner[0] -= _poly_eval(anti, theta)
    if polys:
        anti = _poly_antiderivative(_poly_mul(polys[0], inner))
        return _poly_eval(anti, t) - _poly_eval(anti, theta)
    return Fraction(1)


def simplex_monomial_integral(exponents, theta, t) -> Fraction:
    """Iterated integral of prod s_j^{a_j}; exponents[0] is the outermost."""
    theta = Fraction(theta)
    t = Fraction(t)
    if theta >= t:
        raise ValueError("need theta < t")
    return simplex_poly_integral([_monomial(int(a)) for a in exponents], theta, t)


def shuffle_identity_check(a_exponents, b_exponents, theta, t):
    """Exact check of the simplex-product decomposition on monomials.

    Returns (lhs, rhs, |lhs - rhs|) as Fractions; the two sides are the
    product of the two block integrals and the shuffle-sum respectively.
    """
    a_exponents = [int(a) for a in a_exponents]
    b_exponents = [int(b) for b in b_exponents]
    if any(e < 0 for e in a_exponents + b_exponents):
        raise ValueError("exponents must be non-negative integers")
    m, n = len(a_exponents), len(b_exponents)
    if m + n > 6:
        raise ValueError("m + n capped at 6 for the identity check")
    theta = Fraction(theta)
    t = Fraction(t)
    lhs = simplex_monomial_integral(a_exponents, theta, t) * simplex_monomial_integral(
        b_exponents, theta, t
    )
    merged = a_exponents + b_exponents
    rhs = Fraction(0)
    for sigma in enumerate_shuffles(m, n).perms:
        # sigma(label) is the chain position of that label, so position p
        # carries the factor with label sigma^{-1}(p); a permutation that is
        # increasing on each block keeps both blocks in their internal order
        # along the chain, which is exactly the tiling of the product.
        inverse = [0] * (m + n)
        for label, pos in enumerate(sigma, start=1):
            inverse[pos - 1] = label
        rhs += simplex_monomial_integral([merged[lab - 1] for lab in inverse], theta, t)
    return lhs, rhs, abs(lhs - rhs)


# ---------------------------------------------------------------------------
# interleavings for the nested-simplex decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InterleavingSet:
    """Label sequences realizing the nested-simplex decomposition.

    Each assignment lists, outermost variable first, which factor
    ("f", j) or ("g", i) it carries; every label occurs exactly once.
    """

    n: int
    p: int
    k: int
    assignments: tuple[tuple[tuple[str, int], ...], ...]

    def __len__(self) -> int:
        return len(self.assignments)

    def measured_growth_constant(self) -> int:
        """Smallest integer C with #assignments <= C^(n+p)."""
        c = 1
        while c ** (self.n + self.p) < len(self.assignments):
            c += 1
        return c


def _merges(left: list, right: list):
    if not left:
        yield list(right)
        return
    if not right:
        yield list(left)
        return
    for tail in _merges(left[1:], right):
        yield [left[0]] + tail
    for tail in _merges(left, right[1:]):
        yield [right[0]] + tail


def partial_shuffle_decompose(n: int, p: int, k: int) -> InterleavingSet:
    """Build the interleaving set by the inductive construction.

    Base n = 1 (k = 1): the inner block simply follows f_1.  For k = 1 the
    leading variable is pulled out and the remaining blocks are shuffled;
    for k >= 2 the leading variable is pulled out and the construction
    recurses on (n-1, p, k-1).
    """
    if not (1 <= k <= n):
        raise ValueError("need 1 <= k <= n")
    if n > 5 or p > 5:
        raise ValueError("n and p capped at 5")
    f_labels = [("f", j) for j in range(1, n + 1)]
    g_labels = [("g", i) for i in range(1, p + 1)]

    def build(f_block: list, k_local: int) -> list[tuple]:
        if len(f_block) == 1:
            return [tuple(f_block + g_labels)]
        if k_local == 1:
            return [
                tuple([f_block[0]] + merge)
                for merge in _merges(f_block[1:], g_labels)
            ]
        return [
            tuple([f_block[0]]) + rest for rest in build(f_block[1:], k_local - 1)
        ]

    return InterleavingSet(n, p, k, tuple(build(f_labels, k)))


def interleaving_identity_check(n: int, p: int, k: int, f_exponents, g_exponents, theta, t):
    """Exact check of the nested-simplex decomposition on monomials.

    lhs nests the inner p-simplex integral (over (theta, s_k)) inside the
    k-th slot of the outer n-simplex integral; rhs sums flat (n+p)-simplex
    integrals over the constructed interleavings.
    """
    f_exponents = [int(a) for a in f_exponents]
    g_exponents = [int(a) for a in g_exponents]
    if len(f_exponents) != n or len(g_exponents) != p:
        raise ValueError("exponent lists must have lengths n and p")
    theta = Fraction(theta)
    t = Fraction(t)
    inter = partial_shuffle_decompose(n, p, k)

    # lhs: inner integral as a polynomial in s_k, then the outer integral
    inner = [Fraction(1)]
    for a in reversed(g_exponents):
        anti = _poly_antiderivative(_poly_mul(_monomial(a), inner))
        inner = list(anti)
        inner[0] -= _poly_eval(anti, theta)
    outer_polys = [_monomial(a) for a in f_exponents]
    outer_polys[k - 1] = _poly_mul(outer_polys[k - 1], inner)
    lhs = simplex_poly_integral(outer_polys, theta, t)

    exponent_of = {("f", j + 1): f_exponents[j] for j in range(n)}
    exponent_of.update({("g", i + 1): g_exponents[i] for i in range(p)})
    rhs = Fraction(0)
    for assignment in inter.assignments:
        rhs += simplex_monomial_integral(
            [exponent_of[lab] for lab in assignment], theta, t
        )
    return lhs, rhs, abs(lhs - rhs), inter


def verification_report(n_random: int = 200, seed: int = 1234):
    """Exact pass/fail table: counts, randomized identity cases, decomposition.

    Every check is rational arithmetic, so the tolerance is literally zero.
    """
    from .report import ExperimentReport

    t0 = time.perf_counter()
    rep = ExperimentReport("shuffle-verify", {"n_random": n_random, "seed": seed})
    count_ok = all(
        len(enumerate_shuffles(m, n)) == comb(m + n, m)
        for m in range(0, 7)
        for n in range(0, 7)
        if m + n <= 12
    )
    rep.add("cardinality_binomial", float(count_ok), passed=count_ok)

    rng = random.Random(seed)
    endpoints = [Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(1)]
    failures = 0
    for _ in range(n_random):
        m = rng.randint(0, 3)
        n = rng.randint(max(1 - m, 0), min(6 - m, 3))
        a = [rng.randint(0, 3) for _ in range(m)]
        b = [rng.randint(0, 3) for _ in range(n)]
        theta = rng.choice(endpoints[:-1])
        t = rng.choice([e for e in endpoints if e > theta])
        _, _, diff = shuffle_identity_check(a, b, theta, t)
        failures += diff != 0
    rep.add(
        "shuffle_identity_failures", float(failures), tolerance=0.0, passed=failures == 0
    )

    worst_c = 1
    failures = 0
    for n in range(1, 5):
        for p in range(1, 4):
            for k in range(1, n + 1):
                f_exp = [rng.randint(0, 2) for _ in range(n)]
                g_exp = [rng.randint(0, 2) for _ in range(p)]
                _, _, diff, inter = interleaving_identity_check(
                    n, p, k, f_exp, g_exp, 0, 1
                )
                failures += diff != 0
                worst_c = max(worst_c, inter.measured_growth_constant())
    rep.add(
        "decomposition_failures", float(failures), tolerance=0.0, passed=failures == 0
    )
    rep.add("measured_growth_constant", float(worst_c))
    rep.duration_seconds = time.perf_counter() - t0
    return rep
