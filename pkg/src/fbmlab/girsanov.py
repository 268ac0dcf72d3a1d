"""Drift-to-Wiener-shift map, stochastic exponentials, and weighted estimators."""

from __future__ import annotations

import time
from dataclasses import dataclass
from math import gamma

import numpy as np

from .core import GridFunction, SeedSpec, TimeGrid
from .fbm import FbmEnsemble, sample_exact, sample_volterra
from .fraccalc import FracOrder, frac_derivative, integral_matrix
from .kernel import _as_hurst, kernel_operator_norm
from .report import ExperimentReport
from .sde import DriftSpec, euler_solve_batch


@dataclass(frozen=True)
class GirsanovWeight:
    """Shift integrand, running log-density, and terminal density."""

    theta: GridFunction
    log_z: GridFunction
    z_terminal: float


def theta_bound_constant(hurst, convention: str = "beta") -> float:
    """Constant C with |shift(s)| <= C * sup|b| * s^{1/2-H}.

    "beta" is the Beta-integral evaluation Gamma(3/2-H)/Gamma(2-2H); the
    "displayed" variant Gamma(3/2-H)/Gamma(1-2H) is the smaller companion
    value whose discrepancy the verification report flags.
    """
    h = _as_hurst(hurst).h
    if convention == "beta":
        return gamma(1.5 - h) / gamma(2.0 - 2.0 * h)
    if convention == "displayed":
        return gamma(1.5 - h) / gamma(1.0 - 2.0 * h)
    raise ValueError(f"unknown convention {convention!r}")


def novikov_bound(sup_norm: float, hurst, horizon: float, mu: float, convention: str = "displayed") -> float:
    """exp(|mu| C_H^2 T^{2(1-H)} sup|b|^2) with C_H per theta_bound_constant."""
    h = _as_hurst(hurst).h
    c = theta_bound_constant(h, convention)
    return float(np.exp(abs(mu) * c**2 * horizon ** (2.0 * (1.0 - h)) * sup_norm**2))


def theta_from_drift_batch(
    b: DriftSpec, paths: np.ndarray, grid: TimeGrid, hurst, normalized: bool = True
) -> np.ndarray:
    """Shift integrand for each path so that reweighting reproduces the drift.

    paths has shape (n, N+1, d); returns the same shape.  The weighted
    fractional-integral composition is divided by the kernel operator norm
    c_H Gamma(H + 1/2) so that int_0^t K(t,s) theta_s ds recovers
    int_0^t b(r, X_r) dr (normalized=False returns the raw composition,
    which is what the displayed shift-bound constants refer to).  The
    fractional-integral matrix depends only on (grid, H) and is cached.
    """
    h = _as_hurst(hurst).h
    n_paths, n_nodes, d = paths.shape
    nodes = grid.nodes
    drift_vals = np.empty_like(paths)
    for i in range(n_nodes):
        drift_vals[:, i, :] = b(nodes[i], paths[:, i, :])
    weight_in = nodes ** (0.5 - h)
    with np.errstate(divide="ignore"):
        weight_out = nodes ** (h - 0.5)
    weight_out = np.where(np.isfinite(weight_out), weight_out, 0.0)
    m = integral_matrix(grid.steps, 0.5 - h, grid.dt)
    flat = (drift_vals * weight_in[None, :, None]).transpose(1, 0, 2).reshape(
        n_nodes, n_paths * d
    )
    integ = m @ flat
    theta = (integ * weight_out[:, None]).reshape(n_nodes, n_paths, d).transpose(1, 0, 2)
    theta[:, 0, :] = 0.0  # bounded densities give a vanishing right limit
    if normalized:
        theta = theta / kernel_operator_norm(h)
    return theta


def theta_from_drift(b: DriftSpec, path: GridFunction, hurst, normalized: bool = True) -> GridFunction:
    """Single-path wrapper around theta_from_drift_batch."""
    vals = path.values
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[1] != b.dim:
        raise ValueError("path dimension does not match the drift")
    theta = theta_from_drift_batch(b, vals[None, :, :], path.grid, hurst, normalized)[0]
    if path.values.ndim == 1:
        theta = theta[:, 0]
    return GridFunction(path.grid, theta)


def doleans_log_batch(theta: np.ndarray, wiener: np.ndarray, dt: float) -> np.ndarray:
    """Running log of the stochastic exponential, left-point rule.

    theta is (n, N+1, d), wiener the increments (n, N, d); returns
    (n, N+1) with log Z_0 = 0.
    """
    incr = np.sum(theta[:, :-1, :] * wiener, axis=2) - 0.5 * dt * np.sum(
        theta[:, :-1, :] ** 2, axis=2
    )
    out = np.zeros((theta.shape[0], theta.shape[1]))
    out[:, 1:] = np.cumsum(incr, axis=1)
    return out


def doleans_exponential(theta: GridFunction, wiener: np.ndarray) -> GirsanovWeight:
    """Stochastic exponential of one shift path against its Wiener increments."""
    vals = theta.values
    if vals.ndim == 1:
        vals = vals[:, None]
    if wiener.ndim == 1:
        wiener = wiener[:, None]
    if wiener.shape != (theta.grid.steps, vals.shape[1]):
        raise ValueError("wiener increments must have shape (N, d)")
    log_z = doleans_log_batch(vals[None, :, :], wiener[None, :, :], theta.grid.dt)[0]
    return GirsanovWeight(
        theta, GridFunction(theta.grid, log_z), float(np.exp(log_z[-1]))
    )


def weak_solution_estimator(
    b: DriftSpec,
    phi,
    x,
    t: float,
    ensemble: FbmEnsemble,
) -> tuple[float, float]:
    """Importance-sampled E[phi(X_t)] for the weak solution built by reweighting.

    The ensemble must be Volterra-sampled (it carries the Wiener
    increments).  X = x + B on the sampled space; the weight turns the
    drift-free paths into the weak solution law.
    """
    if ensemble.wiener is None:
        raise ValueError("weak_solution_estimator needs a Volterra-sampled ensemble")
    if ensemble.n_paths == 0:
        raise ValueError("empty ensemble")
    grid = ensemble.grid
    idx = int(round(t / grid.dt))
    x = np.broadcast_to(np.asarray(x, dtype=float), (ensemble.dim,))
    paths = ensemble.paths + x
    theta = theta_from_drift_batch(b, paths, grid, ensemble.hurst)
    log_z = doleans_log_batch(theta, ensemble.wiener, grid.dt)
    weights = np.exp(log_z[:, idx])
    values = phi(paths[:, idx, :]) * weights
    est = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(len(values)))
    return est, se


def drift_image_bound(b: DriftSpec, paths: np.ndarray, grid: TimeGrid, hurst) -> dict:
    """Check that t -> int_0^t |b(s, X_s)| ds sits in the kernel-image space.

    Applies the fractional derivative of order H + 1/2 to the cumulative
    integral and compares against the closed-form bound
    sup|b| t^{1/2-H} / ((1/2-H) Gamma(1/2-H)) at every positive node.
    Returns the worst margin (negative = bound holds) and the L^2 norms.
    """
    h = _as_hurst(hurst).h
    nodes = grid.nodes
    order = FracOrder(h + 0.5, "left", 0.0, grid.horizon)
    bound = (
        b.sup_norm * nodes ** (0.5 - h) / ((0.5 - h) * gamma(0.5 - h))
    )
    worst = -np.inf
    l2_norms = []
    for p in range(paths.shape[0]):
        speed = np.linalg.norm(b(0.0, paths[p]), axis=-1)
        cumulative = np.concatenate(
            ([0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * grid.dt))
        )
        deriv = frac_derivative(GridFunction(grid, cumulative), order).values
        margin = float(np.max(np.abs(deriv[1:]) - bound[1:]))
        worst = max(worst, margin)
        l2_norms.append(float(np.sqrt(np.trapezoid(deriv**2, nodes))))
    return {"worst_margin": worst, "l2_norms": l2_norms}


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------


def normalization_report(
    drifts,
    hursts=(0.1, 0.2, 0.3),
    steps: int = 2**8,
    horizon: float = 1.0,
    n_paths: int = 10**5,
    seed: SeedSpec = SeedSpec(0),
    batch: int = 2**14,
    x0: float = 0.0,
) -> ExperimentReport:
    """E[Z_T] = 1 within 4 SE plus the pathwise shift bound, per drift and H."""
    t0 = time.perf_counter()
    grid = TimeGrid(horizon, steps)
    rep = ExperimentReport(
        "girsanov-verify",
        {
            "drifts": [b.name for b in drifts],
            "hursts": list(hursts),
            "steps": steps,
            "horizon": horizon,
            "n_paths": n_paths,
            "seed": seed.master,
            "x0": x0,
        },
    )
    nodes = grid.nodes
    for h in hursts:
        c_beta = theta_bound_constant(h, "beta")
        c_displayed = theta_bound_constant(h, "displayed")
        op_norm = kernel_operator_norm(h)
        envelope = nodes[1:] ** (0.5 - h)
        for b in drifts:
            total = 0.0
            total_sq = 0.0
            done = 0
            index = 0
            worst_ratio = 0.0
            while done < n_paths:
                take = min(batch, n_paths - done)
                ens = sample_volterra(
                    grid, h, b.dim, take, seed, label=("girs", b.name, h, index)
                )
                paths = ens.paths + x0
                theta = theta_from_drift_batch(b, paths, grid, h)
                log_z = doleans_log_batch(theta, ens.wiener, grid.dt)
                z = np.exp(log_z[:, -1])
                total += float(np.sum(z))
                total_sq += float(np.sum(z**2))
                if b.sup_norm > 0:
                    # the displayed bound constants refer to the raw
                    # fractional composition, i.e. theta times the operator norm
                    mags = op_norm * np.linalg.norm(theta[:, 1:, :], axis=2)
                    worst_ratio = max(
                        worst_ratio,
                        float(np.max(mags / (b.sup_norm * envelope[None, :]))),
                    )
                done += take
                index += 1
            mean = total / n_paths
            se = float(
                np.sqrt(max(total_sq / n_paths - mean**2, 0.0) / n_paths)
            )
            rep.add(
                f"ez_gap[{b.name},H={h}]",
                mean - 1.0,
                std_error=se,
                tolerance=4.0 * se,
                passed=abs(mean - 1.0) <= 4.0 * se,
            )
            if b.sup_norm > 0:
                rep.add(
                    f"theta_bound_margin[{b.name},H={h}]",
                    worst_ratio - c_beta,
                    tolerance=1e-10,
                    passed=worst_ratio <= c_beta + 1e-10,
                )
                # the displayed companion constant is smaller; the ratio to it
                # is recorded to flag the discrepancy, not asserted
                rep.add(
                    f"theta_ratio_vs_displayed[{b.name},H={h}]",
                    worst_ratio / c_displayed,
                )
    rep.duration_seconds = time.perf_counter() - t0
    return rep


def weak_vs_euler_report(
    b: DriftSpec,
    phi,
    phi_name: str = "gauss_bump",
    hurst: float = 0.2,
    horizon: float = 1.0,
    girsanov_steps: int = 2**8,
    euler_steps: int = 2**11,
    n_paths: int = 10**5,
    seed: SeedSpec = SeedSpec(0),
    x0: float = 0.0,
    batch: int = 2**13,
) -> ExperimentReport:
    """Girsanov-weighted E[phi(X_t)] against fine-grid Euler Monte Carlo."""
    t0 = time.perf_counter()
    g_grid = TimeGrid(horizon, girsanov_steps)
    e_grid = TimeGrid(horizon, euler_steps)
    rep = ExperimentReport(
        "girsanov-weak-vs-euler",
        {
            "drift": b.name,
            "phi": phi_name,
            "hurst": hurst,
            "horizon": horizon,
            "girsanov_steps": girsanov_steps,
            "euler_steps": euler_steps,
            "n_paths": n_paths,
            "seed": seed.master,
            "x0": x0,
        },
    )
    # weighted estimator
    tot_w, tot_w2 = 0.0, 0.0
    done, index = 0, 0
    while done < n_paths:
        take = min(batch, n_paths - done)
        ens = sample_volterra(g_grid, hurst, b.dim, take, seed, label=("weak", index))
        paths = ens.paths + x0
        theta = theta_from_drift_batch(b, paths, g_grid, hurst)
        log_z = doleans_log_batch(theta, ens.wiener, g_grid.dt)
        vals = phi(paths[:, -1, :]) * np.exp(log_z[:, -1])
        tot_w += float(np.sum(vals))
        tot_w2 += float(np.sum(vals**2))
        done += take
        index += 1
    mean_w = tot_w / n_paths
    se_w = float(np.sqrt(max(tot_w2 / n_paths - mean_w**2, 0.0) / n_paths))

    # fine-grid Euler estimator
    tot_e, tot_e2 = 0.0, 0.0
    done, index = 0, 0
    while done < n_paths:
        take = min(batch, n_paths - done)
        ens = sample_exact(e_grid, hurst, b.dim, take, seed, label=("euler", index))
        sol = euler_solve_batch(b, x0, e_grid, ens.paths)
        vals = phi(sol[:, -1, :])
        tot_e += float(np.sum(vals))
        tot_e2 += float(np.sum(vals**2))
        done += take
        index += 1
    mean_e = tot_e / n_paths
    se_e = float(np.sqrt(max(tot_e2 / n_paths - mean_e**2, 0.0) / n_paths))

    combined = float(np.hypot(se_w, se_e))
    rep.add("weighted_estimate", mean_w, std_error=se_w)
    rep.add("euler_estimate", mean_e, std_error=se_e)
    rep.add(
        "difference",
        mean_w - mean_e,
        std_error=combined,
        tolerance=4.0 * combined,
        passed=abs(mean_w - mean_e) <= 4.0 * combined,
    )
    rep.duration_seconds = time.perf_counter() - t0
    return rep
