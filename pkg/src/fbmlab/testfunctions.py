"""Separable smooth test functions with analytic derivatives and norms."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi, sqrt

import numpy as np
from scipy.special import gammaincc


@dataclass(frozen=True)
class MultiIndex:
    """Spatial derivative orders, one row per factor, one column per axis."""

    entries: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not self.entries or not self.entries[0]:
            raise ValueError("entries must form a non-empty m x d array")
        width = len(self.entries[0])
        for row in self.entries:
            if len(row) != width:
                raise ValueError("ragged multi-index")
            if any(e < 0 for e in row):
                raise ValueError("multi-index entries must be non-negative")

    @property
    def m(self) -> int:
        return len(self.entries)

    @property
    def d(self) -> int:
        return len(self.entries[0])

    @property
    def order(self) -> int:
        return sum(sum(row) for row in self.entries)

    @property
    def max_entry(self) -> int:
        return max(max(row) for row in self.entries)

    @classmethod
    def zero(cls, m: int, d: int) -> "MultiIndex":
        return cls(tuple(tuple(0 for _ in range(d)) for _ in range(m)))


class SpaceProfile:
    """One-axis smooth profile with analytic derivatives up to order 3."""

    def value(self, x):
        raise NotImplementedError

    def derivative(self, order: int, x):
        raise NotImplementedError

    def l1_norm(self) -> float:
        raise NotImplementedError

    def sup_norm(self) -> float:
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def spectral_tail(self, radius: float, power: int) -> float | None:
        """Upper bound for (1/pi) int_R^inf u^power |fourier(g)(u)| du, if known."""
        return None


@dataclass(frozen=True)
class PolyBump(SpaceProfile):
    """amp * (1 - u^2)^q on |u| < 1 with u = (x - center)/radius; C^{q-1}."""

    amplitude: float = 1.0
    center: float = 0.0
    radius: float = 1.0
    power: int = 5

    def _poly(self, order: int) -> np.polynomial.Polynomial:
        base = np.polynomial.Polynomial([1.0, 0.0, -1.0]) ** self.power
        return base.deriv(order) if order else base

    def value(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.radius
        out = np.where(np.abs(u) < 1.0, self._poly(0)(np.clip(u, -1, 1)), 0.0)
        return self.amplitude * out

    def derivative(self, order: int, x):
        if order == 0:
            return self.value(x)
        if order > self.power - 2:
            raise ValueError("derivative order exceeds smoothness of the bump")
        u = (np.asarray(x, dtype=float) - self.center) / self.radius
        out = np.where(np.abs(u) < 1.0, self._poly(order)(np.clip(u, -1, 1)), 0.0)
        return self.amplitude * out / self.radius**order

    def l1_norm(self) -> float:
        q = self.power
        return abs(self.amplitude) * self.radius * sqrt(pi) * gamma(q + 1.0) / gamma(q + 1.5)

    def sup_norm(self) -> float:
        return abs(self.amplitude)

    def support(self) -> tuple[float, float]:
        return (self.center - self.radius, self.center + self.radius)


@dataclass(frozen=True)
class GaussWindow(SpaceProfile):
    """amp * exp(-(x-center)^2 / (2 sigma^2)); support truncated at 10 sigma.

    The tail beyond the declared support is below amp * 2e-22, so treating
    the profile as compactly supported costs nothing at double precision,
    while the Gaussian spectrum gives analytic truncation-tail bounds.
    """

    amplitude: float = 1.0
    center: float = 0.0
    sigma: float = 0.35
    support_widths: float = 10.0

    def value(self, x):
        y = (np.asarray(x, dtype=float) - self.center) / self.sigma
        return self.amplitude * np.exp(-0.5 * y**2)

    def derivative(self, order: int, x):
        if order == 0:
            return self.value(x)
        y = (np.asarray(x, dtype=float) - self.center) / self.sigma
        g = np.exp(-0.5 * y**2)
        if order == 1:
            poly = -y
        elif order == 2:
            poly = y**2 - 1.0
        elif order == 3:
            poly = -(y**3) + 3.0 * y
        else:
            raise ValueError("Gaussian derivatives implemented up to order 3")
        return self.amplitude * poly * g / self.sigma**order

    def l1_norm(self) -> float:
        return abs(self.amplitude) * self.sigma * sqrt(2.0 * pi)

    def sup_norm(self) -> float:
        return abs(self.amplitude)

    def support(self) -> tuple[float, float]:
        w = self.support_widths * self.sigma
        return (self.center - w, self.center + w)

    def spectral_tail(self, radius: float, power: int) -> float:
        """(1/pi) int_R^inf u^p |ghat(u)| du with ghat = amp sigma sqrt(2pi) e^{-s^2u^2/2}."""
        a = 0.5 * (power + 1.0)
        scale = (2.0 / self.sigma**2) ** a
        integral = 0.5 * scale * gamma(a) * float(gammaincc(a, 0.5 * (radius * self.sigma) ** 2))
        return abs(self.amplitude) * self.sigma * sqrt(2.0 * pi) * integral / pi


@dataclass(frozen=True)
class TimeProfile:
    """Smooth time factor with known sup norm: constant or raised cosine."""

    kind: str = "one"
    horizon: float = 1.0

    def value(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "one":
            return np.ones_like(s)
        if self.kind == "raised_cosine":
            return 0.75 + 0.25 * np.cos(2.0 * pi * s / self.horizon)
        raise ValueError(f"unknown time profile {self.kind!r}")

    def sup_norm(self) -> float:
        return 1.0


@dataclass(frozen=True)
class SeparableFactor:
    """One factor f_j(s, x) = tau(s) * prod_axes g_a(x_a)."""

    time: TimeProfile
    space: tuple[SpaceProfile, ...]

    @property
    def dim(self) -> int:
        return len(self.space)

    def value(self, s, x):
        x = np.asarray(x, dtype=float)
        out = self.time.value(s)
        for a, profile in enumerate(self.space):
            out = out * profile.value(x[..., a])
        return out

    def space_derivative(self, orders, s, x):
        orders = tuple(orders)
        if len(orders) != self.dim:
            raise ValueError("one derivative order per axis required")
        x = np.asarray(x, dtype=float)
        out = self.time.value(s)
        for a, profile in enumerate(self.space):
            out = out * profile.derivative(orders[a], x[..., a])
        return out

    def l1_norm(self) -> float:
        out = self.time.sup_norm()
        for profile in self.space:
            out *= profile.l1_norm()
        return out

    def sup_norm(self) -> float:
        out = self.time.sup_norm()
        for profile in self.space:
            out *= profile.sup_norm()
        return out

    def support(self, axis: int) -> tuple[float, float]:
        return self.space[axis].support()

    def spectral_tail(self, radius: float, power: int) -> float | None:
        if self.dim != 1:
            return None
        tail = self.space[0].spectral_tail(radius, power)
        if tail is None:
            return None
        return self.time.sup_norm() * tail


@dataclass(frozen=True)
class SeparableTestFunction:
    """Product of m factors, each on its own (time, space) slot."""

    factors: tuple[SeparableFactor, ...]

    def __post_init__(self):
        if not self.factors:
            raise ValueError("need at least one factor")
        if len({f.dim for f in self.factors}) != 1:
            raise ValueError("all factors must share the spatial dimension")

    @property
    def m(self) -> int:
        return len(self.factors)

    @property
    def dim(self) -> int:
        return self.factors[0].dim

    def scaled(self, factor_scales) -> "SeparableTestFunction":
        """Rescale factor amplitudes (testing hook for linearity checks)."""
        new = []
        for fac, lam in zip(self.factors, factor_scales):
            profiles = tuple(
                _scale_profile(p, lam if a == 0 else 1.0)
                for a, p in enumerate(fac.space)
            )
            new.append(SeparableFactor(fac.time, profiles))
        return SeparableTestFunction(tuple(new))


def _scale_profile(profile: SpaceProfile, lam: float) -> SpaceProfile:
    if lam == 1.0:
        return profile
    if isinstance(profile, PolyBump):
        return PolyBump(profile.amplitude * lam, profile.center, profile.radius, profile.power)
    if isinstance(profile, GaussWindow):
        return GaussWindow(
            profile.amplitude * lam, profile.center, profile.sigma, profile.support_widths
        )
    raise TypeError(f"cannot scale {type(profile).__name__}")


def gauss_factor(amplitude=1.0, center=0.0, sigma=0.35, dim=1, time_kind="one", horizon=1.0) -> SeparableFactor:
    profiles = tuple(GaussWindow(amplitude if a == 0 else 1.0, center, sigma) for a in range(dim))
    return SeparableFactor(TimeProfile(time_kind, horizon), profiles)


def bump_factor(amplitude=1.0, center=0.0, radius=1.0, power=5, dim=1, time_kind="one", horizon=1.0) -> SeparableFactor:
    profiles = tuple(
        PolyBump(amplitude if a == 0 else 1.0, center, radius, power) for a in range(dim)
    )
    return SeparableFactor(TimeProfile(time_kind, horizon), profiles)


def catalog(horizon: float = 1.0) -> dict[str, SeparableTestFunction]:
    """Named single-factor test functions used throughout the experiments."""
    return {
        "gauss": SeparableTestFunction((gauss_factor(horizon=horizon),)),
        "gauss_wide": SeparableTestFunction(
            (gauss_factor(sigma=0.5, horizon=horizon),)
        ),
        "gauss_cosine_time": SeparableTestFunction(
            (gauss_factor(time_kind="raised_cosine", horizon=horizon),)
        ),
        "poly_bump": SeparableTestFunction(
            (bump_factor(radius=1.2, horizon=horizon),)
        ),
    }
