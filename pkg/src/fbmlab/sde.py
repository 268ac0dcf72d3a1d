"""Drift catalog with mollification, and the Euler scheme for additive fBm noise."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import GridFunction, SeedSpec, TimeGrid
from .report import ExperimentReport

# ---------------------------------------------------------------------------
# the standard bump and its antiderivative (shared by all mollifications)
# ---------------------------------------------------------------------------

_BUMP_TABLE_SIZE = 2**14 + 1


@lru_cache(maxsize=1)
def _bump_tables():
    """Grid and CDF table of the normalized bump, plus the normalizing mass."""
    z = np.linspace(-1.0, 1.0, _BUMP_TABLE_SIZE)
    raw = np.zeros_like(z)
    interior = np.abs(z) < 1.0
    raw[interior] = np.exp(-1.0 / (1.0 - z[interior] ** 2))
    dz = z[1] - z[0]
    cdf = np.zeros_like(z)
    cdf[1:] = np.cumsum(0.5 * (raw[1:] + raw[:-1])) * dz
    total = float(cdf[-1])
    cdf = cdf / total
    for arr in (z, cdf):
        arr.setflags(write=False)
    return z, cdf, total


def bump_density(z) -> np.ndarray:
    """Normalized C-infinity bump exp(-1/(1-z^2)) / mass on (-1, 1)."""
    z = np.asarray(z, dtype=float)
    _, _, total = _bump_tables()
    out = np.zeros_like(z)
    mask = np.abs(z) < 1.0
    zi = z[mask]
    out[mask] = np.exp(-1.0 / (1.0 - zi**2)) / total
    return out


def bump_cdf(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    grid, cdf, _ = _bump_tables()
    return np.interp(z, grid, cdf, left=0.0, right=1.0)


def bump_derivative(z, order: int) -> np.ndarray:
    """order-th derivative of the normalized bump (order 0, 1 or 2)."""
    z = np.asarray(z, dtype=float)
    base = bump_density(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        one = 1.0 - z**2
        if order == 0:
            return base
        if order == 1:
            fac = np.where(np.abs(z) < 1.0, -2.0 * z / one**2, 0.0)
            return base * fac
        if order == 2:
            fac = np.where(
                np.abs(z) < 1.0,
                4.0 * z**2 / one**4 - 2.0 * (1.0 + 3.0 * z**2) / one**3,
                0.0,
            )
            return base * fac
    raise ValueError("bump derivatives implemented up to order 2")


def _interval_factor(u, lo: float, hi: float, level: int, order: int) -> np.ndarray:
    """order-th derivative of 1_[lo,hi] convolved with the bump of radius 1/level."""
    if order == 0:
        return bump_cdf(level * (u - lo)) - bump_cdf(level * (u - hi))
    return float(level) ** order * (
        bump_derivative(level * (u - lo), order - 1)
        - bump_derivative(level * (u - hi), order - 1)
    )


# ---------------------------------------------------------------------------
# drift catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftSpec:
    """A drift b(t, x) with declared norms and analytic spatial derivatives.

    kind is "smooth", "singular", or "mollified".  Singular entries carry a
    box-sum representation (per component: list of (coefficient,
    per-axis intervals)) which makes their mollification closed-form.
    Declared norms: sup_norm = ||b||_{L^inf L^inf}, l1_norm = sup_t of the
    spatial L^1 norm of |b| (infinite for unbounded test entries).
    """

    name: str
    dim: int
    kind: str
    sup_norm: float
    l1_norm: float
    max_derivative_order: int = 0
    params: dict = field(default_factory=dict)
    box_terms: tuple = ()  # per component: tuple of (coef, ((lo, hi), ...))
    mollify_level: int | None = None

    def __call__(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"x last axis must be {self.dim}")
        if self.kind == "smooth":
            return self._smooth_eval(t, x)
        if self.kind == "singular":
            return self._box_eval(x, orders=None, level=None)
        return self._box_eval(x, orders=None, level=self.mollify_level)

    def derivative(self, order: int, t, x) -> np.ndarray:
        """Spatial derivative tensor, shape x.shape[:-1] + (d,) * (order + 1).

        Entry [..., i, a1, ..., ak] is the mixed partial of component i in
        the directions a1..ak.
        """
        if order < 1:
            raise ValueError("derivative order must be >= 1")
        if order > self.max_derivative_order:
            raise ValueError(
                f"{self.name} provides derivatives up to order "
                f"{self.max_derivative_order}, requested {order}"
            )
        x = np.asarray(x, dtype=float)
        if self.kind == "smooth":
            return self._smooth_derivative(order, t, x)
        if self.kind == "mollified":
            return self._box_derivative(order, x)
        raise ValueError("singular drifts are not differentiable")

    # -- smooth entries -----------------------------------------------------

    def _smooth_eval(self, t, x):
        name = self.params["form"]
        if name == "zero":
            return np.zeros_like(x)
        if name == "constant":
            c = np.asarray(self.params["value"], dtype=float)
            return np.broadcast_to(c, x.shape).copy()
        if name == "linear":
            return self.params["rate"] * x
        if name == "gauss_pulse":
            amp = np.asarray(self.params["amplitude"], dtype=float)
            sigma = self.params["sigma"]
            center = np.asarray(self.params["center"], dtype=float)
            q = np.sum((x - center) ** 2, axis=-1) / (2.0 * sigma**2)
            return amp * np.exp(-q)[..., None]
        raise ValueError(f"unknown smooth form {name!r}")

    def _smooth_derivative(self, order, t, x):
        name = self.params["form"]
        d = self.dim
        base_shape = x.shape[:-1]
        shape = base_shape + (d,) * (order + 1)
        out = np.zeros(shape)
        if name in ("zero", "constant"):
            return out
        if name == "linear":
            if order == 1:
                eye = self.params["rate"] * np.eye(d)
                out[...] = eye
            return out
        if name == "gauss_pulse":
            amp = np.asarray(self.params["amplitude"], dtype=float)
            sigma2 = self.params["sigma"] ** 2
            center = np.asarray(self.params["center"], dtype=float)
            y = x - center
            g = np.exp(-np.sum(y**2, axis=-1) / (2.0 * sigma2))
            if order == 1:
                # d_a (amp_i g) = -amp_i y_a g / sigma^2
                out = np.einsum("...,i,...a->...ia", g, amp, y) * (-1.0 / sigma2)
            elif order == 2:
                eye = np.eye(d)
                term = np.einsum("...a,...b->...ab", y, y) / sigma2**2 - eye / sigma2
                out = np.einsum("...,i,...ab->...iab", g, amp, term)
            elif order == 3:
                eye = np.eye(d)
                yyy = np.einsum("...a,...b,...c->...abc", y, y, y) / sigma2**3
                mixed = (
                    np.einsum("ab,...c->...abc", eye, y)
                    + np.einsum("ac,...b->...abc", eye, y)
                    + np.einsum("bc,...a->...abc", eye, y)
                ) / sigma2**2
                out = np.einsum("...,i,...abc->...iabc", g, amp, mixed - yyy)
            else:
                raise ValueError("gauss_pulse derivatives implemented up to order 3")
            return out
        raise ValueError(f"unknown smooth form {name!r}")

    # -- box-sum entries ------------------------------------------------------

    def _box_eval(self, x, orders, level):
        out = np.zeros(x.shape)
        for comp, terms in enumerate(self.box_terms):
            acc = np.zeros(x.shape[:-1])
            for coef, intervals in terms:
                factor = np.ones(x.shape[:-1])
                for axis, (lo, hi) in enumerate(intervals):
                    u = x[..., axis]
                    if level is None:
                        factor = factor * ((u >= lo) & (u < hi)).astype(float)
                    else:
                        factor = factor * _interval_factor(u, lo, hi, level, 0)
                acc += coef * factor
            out[..., comp] = acc
        return out

    def _box_derivative(self, order, x):
        d = self.dim
        shape = x.shape[:-1] + (d,) * (order + 1)
        out = np.zeros(shape)
        level = self.mollify_level
        for comp, terms in enumerate(self.box_terms):
            for idx in np.ndindex(*(d,) * order):
                mult = [0] * d
                for a in idx:
                    mult[a] += 1
                acc = np.zeros(x.shape[:-1])
                for coef, intervals in terms:
                    factor = np.ones(x.shape[:-1])
                    for axis, (lo, hi) in enumerate(intervals):
                        factor = factor * _interval_factor(
                            x[..., axis], lo, hi, level, mult[axis]
                        )
                    acc += coef * factor
                out[(...,) + (comp,) + idx] = acc
        return out

    # -- misc -----------------------------------------------------------------

    def support_radius(self) -> float:
        """Sup-norm radius of the spatial support (inf for whole-space entries)."""
        if self.kind == "smooth":
            return np.inf
        rad = 0.0
        for terms in self.box_terms:
            for _, intervals in terms:
                for lo, hi in intervals:
                    rad = max(rad, abs(lo), abs(hi))
        if self.kind == "mollified":
            rad += 1.0 / self.mollify_level
        return rad


def numeric_l1_norm(b: DriftSpec, n_grid: int = 4001) -> float:
    """Spatial L^1 norm of |b| by tensor-grid quadrature (d <= 2)."""
    rad = b.support_radius()
    if not np.isfinite(rad):
        rad = b.params.get("center", np.zeros(b.dim))
        sigma = b.params.get("sigma", 1.0)
        rad = float(np.max(np.abs(rad)) + 12.0 * sigma)
    if b.dim == 1:
        xs = np.linspace(-rad, rad, n_grid)[:, None]
        vals = np.linalg.norm(b(0.0, xs), axis=-1)
        return float(np.trapezoid(vals, dx=2 * rad / (n_grid - 1)))
    if b.dim == 2:
        n = 801
        xs = np.linspace(-rad, rad, n)
        grid = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1)
        vals = np.linalg.norm(b(0.0, grid), axis=-1)
        dx = 2 * rad / (n - 1)
        return float(np.trapezoid(np.trapezoid(vals, dx=dx, axis=1), dx=dx))
    raise ValueError("numeric L1 norm implemented for d <= 2")


def numeric_sup_norm(b: DriftSpec, n_grid: int = 4001) -> float:
    rad = b.support_radius()
    if not np.isfinite(rad):
        sigma = b.params.get("sigma", 1.0)
        center = np.asarray(b.params.get("center", np.zeros(b.dim)))
        rad = float(np.max(np.abs(center)) + 12.0 * sigma)
    if b.dim == 1:
        xs = np.linspace(-rad, rad, n_grid)[:, None]
    elif b.dim == 2:
        n = 801
        g = np.linspace(-rad, rad, n)
        xs = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    else:
        raise ValueError("numeric sup norm implemented for d <= 2")
    return float(np.max(np.linalg.norm(b(0.0, xs), axis=-1)))


# -- catalog factories --------------------------------------------------------


def zero_drift(dim: int = 1) -> DriftSpec:
    return DriftSpec(
        "zero", dim, "smooth", 0.0, 0.0, max_derivative_order=3, params={"form": "zero"}
    )


def constant_drift(value, dim: int | None = None) -> DriftSpec:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    dim = dim or len(value)
    return DriftSpec(
        f"constant[{','.join(map(str, value))}]",
        dim,
        "smooth",
        float(np.linalg.norm(value)),
        np.inf,
        max_derivative_order=3,
        params={"form": "constant", "value": tuple(value)},
    )


def linear_drift(rate: float, dim: int = 1) -> DriftSpec:
    """Unbounded test-only entry b(x) = rate * x; not part of the bounded catalog."""
    return DriftSpec(
        f"linear[{rate}]",
        dim,
        "smooth",
        np.inf,
        np.inf,
        max_derivative_order=3,
        params={"form": "linear", "rate": float(rate)},
    )


def gauss_pulse_drift(amplitude, sigma: float = 0.5, center=None, dim: int | None = None) -> DriftSpec:
    amplitude = np.atleast_1d(np.asarray(amplitude, dtype=float))
    dim = dim or len(amplitude)
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    sup = float(np.linalg.norm(amplitude))
    l1 = sup * float((2.0 * np.pi * sigma**2) ** (dim / 2.0))
    return DriftSpec(
        f"gauss_pulse[{sigma}]",
        dim,
        "smooth",
        sup,
        l1,
        max_derivative_order=3,
        params={
            "form": "gauss_pulse",
            "amplitude": tuple(amplitude),
            "sigma": float(sigma),
            "center": tuple(center),
        },
    )


def sign_indicator_drift() -> DriftSpec:
    terms = ((( +1.0, ((0.0, 1.0),)), (-1.0, ((-1.0, 0.0),))),)
    return DriftSpec(
        "sign_indicator", 1, "singular", 1.0, 2.0, box_terms=terms
    )


def box_jump_drift(dim: int = 1) -> DriftSpec:
    """Unit jump supported on the sup-norm unit box, pointing along e_1."""
    terms = [()] * dim
    terms[0] = ((1.0, tuple((-1.0, 1.0) for _ in range(dim))),)
    return DriftSpec(
        f"box_jump[d={dim}]", dim, "singular", 1.0, float(2.0**dim), box_terms=tuple(terms)
    )


def checkerboard_drift() -> DriftSpec:
    terms = (
        (
            (+1.0, ((-1.0, -0.5),)),
            (-1.0, ((-0.5, 0.0),)),
            (+1.0, ((0.0, 0.5),)),
            (-1.0, ((0.5, 1.0),)),
        ),
    )
    return DriftSpec("checkerboard", 1, "singular", 1.0, 2.0, box_terms=terms)


def bounded_catalog(dim: int = 1) -> list[DriftSpec]:
    """All bounded catalog entries at the given dimension."""
    entries = [
        zero_drift(dim),
        constant_drift(np.full(dim, 0.5)),
        gauss_pulse_drift(np.full(dim, 1.0), sigma=0.5),
    ]
    if dim == 1:
        entries += [sign_indicator_drift(), checkerboard_drift(), box_jump_drift(1)]
    else:
        entries.append(box_jump_drift(dim))
    return entries


def mollify(b: DriftSpec, level: int) -> DriftSpec:
    """Smooth approximation by convolution with a bump of radius 1/level.

    The catalog's singular entries are supported in a fixed box, so the
    outer smooth cutoff at radius `level` is the identity for every level
    used here.  The returned entry reports its exact spatial L^1 distance
    to the base drift (computed numerically at construction).
    """
    if b.kind != "singular":
        raise ValueError("mollify applies to singular catalog entries")
    if level <= 0:
        raise ValueError("mollification level must be positive")
    smooth = DriftSpec(
        f"{b.name}~mollified[{level}]",
        b.dim,
        "mollified",
        b.sup_norm,
        b.l1_norm,
        max_derivative_order=3,
        params=dict(b.params),
        box_terms=b.box_terms,
        mollify_level=int(level),
    )
    return smooth


def l1_distance(b1: DriftSpec, b2: DriftSpec, n_grid: int = 4001) -> float:
    """Spatial L^1 distance between two drifts on a shared tensor grid."""
    rad = max(b1.support_radius(), b2.support_radius())
    if b1.dim == 1:
        xs = np.linspace(-rad, rad, n_grid)[:, None]
        diff = np.linalg.norm(b1(0.0, xs) - b2(0.0, xs), axis=-1)
        return float(np.trapezoid(diff, dx=2 * rad / (n_grid - 1)))
    if b1.dim == 2:
        n = 801
        g = np.linspace(-rad, rad, n)
        grid = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
        diff = np.linalg.norm(b1(0.0, grid) - b2(0.0, grid), axis=-1)
        dx = 2 * rad / (n - 1)
        return float(np.trapezoid(np.trapezoid(diff, dx=dx, axis=1), dx=dx))
    raise ValueError("L1 distance implemented for d <= 2")


# ---------------------------------------------------------------------------
# Euler scheme
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolutionPath:
    """One Euler path with its defining data."""

    grid: TimeGrid
    x0: np.ndarray
    drift_name: str
    noise_label: tuple
    values: np.ndarray  # (N+1, d)

    def as_grid_function(self) -> GridFunction:
        vals = self.values[:, 0] if self.values.shape[1] == 1 else self.values
        return GridFunction(self.grid, vals)


def euler_solve_batch(b: DriftSpec, x0, grid: TimeGrid, noise_paths: np.ndarray) -> np.ndarray:
    """Explicit Euler for X' = b dt + dB over a batch of noise paths.

    noise_paths has shape (n, N+1, d) (values of B at the nodes); returns
    the solution values with the same shape.
    """
    n_paths, n_nodes, d = noise_paths.shape
    if d != b.dim:
        raise ValueError("noise dimension does not match the drift")
    dt = grid.dt
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths, d))
    out = np.empty_like(noise_paths)
    out[:, 0, :] = x0
    t = grid.nodes
    for i in range(n_nodes - 1):
        db = noise_paths[:, i + 1, :] - noise_paths[:, i, :]
        out[:, i + 1, :] = out[:, i, :] + b(t[i], out[:, i, :]) * dt + db
    return out


def euler_solve(b: DriftSpec, x0, grid: TimeGrid, noise: GridFunction, noise_label=()) -> SolutionPath:
    vals = noise.values
    if vals.ndim == 1:
        vals = vals[:, None]
    batch = euler_solve_batch(b, x0, grid, vals[None, :, :])
    return SolutionPath(
        grid,
        np.atleast_1d(np.asarray(x0, dtype=float)),
        b.name,
        tuple(noise_label),
        batch[0],
    )


def convergence_report(
    drift_name: str = "sign_indicator",
    levels=(4, 8, 16, 32),
    hurst: float = 0.1,
    steps: int = 2**8,
    horizon: float = 1.0,
    t: float = 1.0,
    n_paths: int = 2048,
    seed: SeedSpec = SeedSpec(0),
    x0: float = 0.0,
    assert_trend: bool = True,
) -> "ExperimentReport":
    """Mollification-level convergence study wrapped as a report.

    assert_trend=False produces a diagnostic-only run (used for
    out-of-hypothesis Hurst values, where no pass flag is claimed).
    """
    from .fbm import sample_exact

    t0 = time.perf_counter()
    b = {e.name: e for e in bounded_catalog(1)}[drift_name]
    grid = TimeGrid(horizon, steps)
    rep = ExperimentReport(
        "sde-converge",
        {
            "drift": drift_name,
            "levels": list(levels),
            "hurst": hurst,
            "steps": steps,
            "horizon": horizon,
            "t": t,
            "n_paths": n_paths,
            "seed": seed.master,
            "x0": x0,
            "assert_trend": assert_trend,
        },
    )
    ens = sample_exact(grid, hurst, b.dim, n_paths, seed, label=("converge",))
    study = strong_convergence_study(b, levels, grid, ens, t, x0)
    for i, li in enumerate(levels):
        for j in range(i + 1, len(levels)):
            rep.add(
                f"msd[{li},{levels[j]}]",
                study["msd"][i, j],
                std_error=study["se"][i, j],
            )
    cauchy = study["cauchy"][:-1]
    for li, c in zip(levels, cauchy):
        rep.add(f"cauchy[{li}]", c)
    if assert_trend:
        decreasing = all(c2 < c1 for c1, c2 in zip(cauchy, cauchy[1:]))
        rep.add("cauchy_decreasing", float(decreasing), passed=decreasing)
    rep.duration_seconds = time.perf_counter() - t0
    return rep


def solve_report(
    drift_name: str = "gauss_pulse[0.5]",
    hurst: float = 0.2,
    steps: int = 2**8,
    horizon: float = 1.0,
    x0: float = 0.0,
    seed: SeedSpec = SeedSpec(0),
) -> tuple["ExperimentReport", SolutionPath]:
    """Solve one path and summarize it (the CLI dumps the values file)."""
    from .fbm import sample_exact

    t0 = time.perf_counter()
    catalog = {e.name: e for e in bounded_catalog(1)}
    if drift_name not in catalog:
        raise ValueError(f"unknown drift {drift_name!r}; choose from {sorted(catalog)}")
    b = catalog[drift_name]
    grid = TimeGrid(horizon, steps)
    ens = sample_exact(grid, hurst, b.dim, 1, seed, label=("solve",))
    path = euler_solve(b, x0, grid, ens.path(0), noise_label=("solve", 0))
    rep = ExperimentReport(
        "sde-solve",
        {
            "drift": drift_name,
            "hurst": hurst,
            "steps": steps,
            "horizon": horizon,
            "x0": x0,
            "seed": seed.master,
        },
    )
    rep.add("terminal_value", float(path.values[-1, 0]))
    rep.add("max_abs_value", float(np.max(np.abs(path.values))))
    rep.duration_seconds = time.perf_counter() - t0
    return rep, path


def strong_convergence_study(
    b: DriftSpec,
    levels,
    grid: TimeGrid,
    ensemble,
    t: float,
    x0=0.0,
) -> dict:
    """Pairwise L^2 differences of mollified solutions under common noise.

    Returns the (level x level) matrix of mean squared differences at time
    t with standard errors, and the per-level Cauchy diagnostic (max over
    finer levels).
    """
    levels = list(levels)
    idx_t = int(round(t / grid.dt))
    terminal = []
    for n in levels:
        bn = mollify(b, n) if b.kind == "singular" else b
        sol = euler_solve_batch(bn, x0, grid, ensemble.paths)
        terminal.append(sol[:, idx_t, :])
    n_lev = len(levels)
    msd = np.zeros((n_lev, n_lev))
    se = np.zeros((n_lev, n_lev))
    n_paths = ensemble.n_paths
    for i in range(n_lev):
        for j in range(i + 1, n_lev):
            sq = np.sum((terminal[i] - terminal[j]) ** 2, axis=1)
            msd[i, j] = msd[j, i] = float(np.mean(sq))
            se[i, j] = se[j, i] = float(np.std(sq, ddof=1) / np.sqrt(n_paths))
    cauchy = [float(np.max(msd[i, i + 1 :])) if i + 1 < n_lev else 0.0 for i in range(n_lev)]
    return {"levels": levels, "msd": msd, "se": se, "cauchy": cauchy}
