"""Variational flow derivatives, Malliavin slices, and flow-regularity scans."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import GridFunction, SeedSpec, TimeGrid
from .fbm import sample_exact
from .kernel import _as_hurst, volterra_kernel
from .report import ExperimentReport
from .sde import DriftSpec, euler_solve_batch, mollify


@dataclass
class VariationalState:
    """Euler path together with its initial-condition derivative tensors.

    tensors[j] has shape (N+1,) + (d,) * (j+1): index [i, a, b1..bj] is the
    j-th derivative of component a at node i.
    """

    grid: TimeGrid
    path: np.ndarray
    tensors: dict[int, np.ndarray] = field(default_factory=dict)


def variational_flow_batch(
    b: DriftSpec, x0, grid: TimeGrid, noise_paths: np.ndarray, order: int
) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Jointly Euler-step the path and its x-derivatives up to `order`.

    Returns (paths, tensors) where tensors[j] has shape
    (n, N+1) + (d,) * (j+1).  The recursion uses the same left-point
    stepping as the base path, so the derivatives are the exact derivatives
    of the discrete flow map up to roundoff.
    """
    if not (1 <= order <= 3):
        raise ValueError("derivative order capped at 3")
    if order > b.max_derivative_order:
        raise ValueError(
            f"{b.name} provides derivatives up to order {b.max_derivative_order}"
        )
    n_paths, n_nodes, d = noise_paths.shape
    dt = grid.dt
    t = grid.nodes
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths, d)).copy()
    paths = np.empty_like(noise_paths)
    paths[:, 0, :] = x
    j1 = np.broadcast_to(np.eye(d), (n_paths, d, d)).copy()
    tensors = {1: np.empty((n_paths, n_nodes, d, d))}
    tensors[1][:, 0] = j1
    if order >= 2:
        j2 = np.zeros((n_paths, d, d, d))
        tensors[2] = np.zeros((n_paths, n_nodes, d, d, d))
    if order >= 3:
        j3 = np.zeros((n_paths, d, d, d, d))
        tensors[3] = np.zeros((n_paths, n_nodes, d, d, d, d))
    for i in range(n_nodes - 1):
        db = b.derivative(1, t[i], x)
        if order >= 2:
            d2b = b.derivative(2, t[i], x)
        if order >= 3:
            d3b = b.derivative(3, t[i], x)
            rate3 = np.einsum("piabc,paj,pbk,pcl->pijkl", d3b, j1, j1, j1)
            rate3 += np.einsum("piab,pajk,pbl->pijkl", d2b, j2, j1)
            rate3 += np.einsum("piab,pajl,pbk->pijkl", d2b, j2, j1)
            rate3 += np.einsum("piab,pakl,pbj->pijkl", d2b, j2, j1)
            rate3 += np.einsum("pia,pajkl->pijkl", db, j3)
        if order >= 2:
            rate2 = np.einsum("piab,paj,pbk->pijk", d2b, j1, j1)
            rate2 += np.einsum("pia,pajk->pijk", db, j2)
        rate1 = np.einsum("pia,paj->pij", db, j1)
        x = x + b(t[i], x) * dt + (noise_paths[:, i + 1, :] - noise_paths[:, i, :])
        j1 = j1 + dt * rate1
        if order >= 2:
            j2 = j2 + dt * rate2
        if order >= 3:
            j3 = j3 + dt * rate3
        paths[:, i + 1, :] = x
        tensors[1][:, i + 1] = j1
        if order >= 2:
            tensors[2][:, i + 1] = j2
        if order >= 3:
            tensors[3][:, i + 1] = j3
    return paths, tensors


def variational_flow(b: DriftSpec, x0, grid: TimeGrid, noise, order: int) -> VariationalState:
    """Single-path wrapper around variational_flow_batch."""
    vals = noise.values if isinstance(noise, GridFunction) else np.asarray(noise)
    if vals.ndim == 1:
        vals = vals[:, None]
    paths, tensors = variational_flow_batch(b, x0, grid, vals[None, :, :], order)
    return VariationalState(grid, paths[0], {j: arr[0] for j, arr in tensors.items()})


# ---------------------------------------------------------------------------
# Malliavin derivative along a solved path
# ---------------------------------------------------------------------------


@dataclass
class MalliavinSlice:
    """D_theta X_t for one fixed perturbation node theta, as t runs over nodes.

    values[i] is the d x d matrix at node i; zero for nodes before theta.
    At node theta itself the kernel degenerates; the slice stores the
    one-step-limited initial value K(t_{theta+1}, t_theta) I there.
    """

    grid: TimeGrid
    theta_index: int
    values: np.ndarray  # (N+1, d, d)


def malliavin_derivative(
    b: DriftSpec,
    path_values: np.ndarray,
    grid: TimeGrid,
    theta_index: int,
    hurst,
    kernel_scale: float = 1.0,
) -> MalliavinSlice:
    """Forward Euler for D_theta X_t = K(t, theta) I + int_theta^t Db D_theta X du.

    The kernel inhomogeneity is re-evaluated at every output node;
    kernel_scale is a testing hook that multiplies it.
    """
    if theta_index < 1:
        raise ValueError("theta must be a positive node index")
    hp = _as_hurst(hurst)
    if path_values.ndim == 1:
        path_values = path_values[:, None]
    n_nodes, d = path_values.shape
    if theta_index >= n_nodes - 1:
        raise ValueError("theta must precede the final node")
    t = grid.nodes
    dt = grid.dt
    theta = t[theta_index]
    eye = np.eye(d)
    values = np.zeros((n_nodes, d, d))
    init = kernel_scale * float(volterra_kernel(t[theta_index + 1], theta, hp))
    values[theta_index] = init * eye
    accum = np.zeros((d, d))
    for i in range(theta_index, n_nodes - 1):
        db = b.derivative(1, t[i], path_values[i]) if b.max_derivative_order else None
        m_now = values[i]
        accum = accum + dt * (db @ m_now if db is not None else 0.0)
        k_next = kernel_scale * float(volterra_kernel(t[i + 1], theta, hp))
        values[i + 1] = k_next * eye + accum
    return MalliavinSlice(grid, theta_index, values)


def _kernel_matrix(grid: TimeGrid, hurst, upto: int) -> np.ndarray:
    """K(t_i, t_j) for 1 <= j < i <= upto, zero elsewhere."""
    nodes = grid.nodes
    out = np.zeros((upto + 1, upto + 1))
    for i in range(2, upto + 1):
        out[i, 1:i] = volterra_kernel(nodes[i], nodes[1:i], hurst)
    return out


def malliavin_terminal_all_theta(
    b: DriftSpec,
    paths: np.ndarray,
    grid: TimeGrid,
    t_index: int,
    hurst,
) -> np.ndarray:
    """D_theta X_{t} at t = node t_index for every theta node 1..t_index-1.

    paths has shape (n, N+1, d); returns (n, t_index-1, d, d), Euler-stepped
    jointly over all theta.
    """
    hp = _as_hurst(hurst)
    n_paths, n_nodes, d = paths.shape
    if t_index >= n_nodes or t_index < 2:
        raise ValueError("t_index must lie in [2, N]")
    nodes = grid.nodes
    dt = grid.dt
    kmat = _kernel_matrix(grid, hp, t_index)
    init = np.array(
        [float(volterra_kernel(nodes[th + 1], nodes[th], hp)) for th in range(1, t_index)]
    )
    smooth = b.max_derivative_order >= 1
    accum = np.zeros((n_paths, t_index - 1, d, d))
    for j in range(1, t_index):
        if not smooth:
            break
        db = b.derivative(1, nodes[j], paths[:, j, :])  # (n, d, d)
        # theta < j: current slice value K(t_j, theta) I + accum
        if j >= 2:
            m_now = accum[:, : j - 1].copy()
            idx = np.arange(1, j)
            m_now += kmat[j, idx][None, :, None, None] * np.eye(d)
            accum[:, : j - 1] += dt * np.einsum("pab,ptbc->ptac", db, m_now)
        # theta == j: one-step-limited initial value
        accum[:, j - 1] += dt * init[j - 1] * db
    out = accum
    idx = np.arange(1, t_index)
    out = out + kmat[t_index, idx][None, :, None, None] * np.eye(d)
    return out


# ---------------------------------------------------------------------------
# compactness diagnostic (double-increment statistic)
# ---------------------------------------------------------------------------


def entrywise_norm_sq(mats: np.ndarray) -> np.ndarray:
    """Squared entrywise-sum matrix norm over the trailing two axes."""
    return np.sum(np.abs(mats), axis=(-2, -1)) ** 2


def double_increment_statistic(slices: np.ndarray, dt: float, beta: float) -> np.ndarray:
    """Per-path value of the double integral of the slice increments.

    slices has shape (n, n_theta, d, d) (theta on the path grid); the
    diagonal pair is excluded and cells carry weight dt^2.
    """
    n_paths, n_theta = slices.shape[:2]
    out = np.zeros(n_paths)
    for a in range(n_theta):
        diff = slices[:, a + 1 :] - slices[:, a : a + 1]
        if diff.shape[1] == 0:
            continue
        gaps = dt * np.arange(1, n_theta - a)
        contrib = entrywise_norm_sq(diff) / gaps[None, :] ** (1.0 + 2.0 * beta)
        out += 2.0 * dt * dt * np.sum(contrib, axis=1)
    return out


def compactness_report(
    b: DriftSpec,
    levels,
    hurst,
    steps: int = 2**8,
    horizon: float = 1.0,
    t: float = 1.0,
    beta: float = 0.1,
    n_paths: int = 256,
    seed: SeedSpec = SeedSpec(0),
    x0: float = 0.0,
    include_zero_drift_check: bool = True,
) -> ExperimentReport:
    """Sup over mollification levels of the Malliavin double-increment statistic.

    For b == 0 the statistic is deterministic and must equal the pure
    kernel-difference double integral on the same node pairs.
    """
    if not (0.0 < beta < 0.5):
        raise ValueError("beta must lie in (0, 1/2)")
    t0 = time.perf_counter()
    grid = TimeGrid(horizon, steps)
    h = _as_hurst(hurst).h
    rep = ExperimentReport(
        "compactness-stat",
        {
            "drift": b.name,
            "levels": list(levels),
            "hurst": h,
            "steps": steps,
            "horizon": horizon,
            "t": t,
            "beta": beta,
            "n_paths": n_paths,
            "seed": seed.master,
            "x0": x0,
        },
    )
    t_index = int(round(t / grid.dt))
    stats = []
    for level in levels:
        bn = mollify(b, level) if b.kind == "singular" else b
        ens = sample_exact(grid, h, b.dim, n_paths, seed, label=("compact", level))
        paths = euler_solve_batch(bn, x0, grid, ens.paths)
        slices = malliavin_terminal_all_theta(bn, paths, grid, t_index, h)
        double_vals = double_increment_statistic(slices, grid.dt, beta)
        l2_vals = grid.dt * np.sum(entrywise_norm_sq(slices), axis=1)
        dmean = float(np.mean(double_vals))
        dse = float(np.std(double_vals, ddof=1) / np.sqrt(n_paths))
        lmean = float(np.mean(l2_vals))
        lse = float(np.std(l2_vals, ddof=1) / np.sqrt(n_paths))
        stats.append((level, dmean, dse, lmean, lse))
        rep.add(f"double_integral[level={level}]", dmean, std_error=dse)
        rep.add(f"l2_norm[level={level}]", lmean, std_error=lse)
    rep.add("sup_double_integral", max(s[1] for s in stats))
    rep.add("sup_l2_norm", max(s[3] for s in stats))
    growth_ok = True
    for (l1v, d1, s1, _, _), (l2v, d2, s2, _, _) in zip(stats, stats[1:]):
        margin = d2 - d1 - 2.0 * float(np.hypot(s1, s2))
        rep.add(f"growth_margin[{l1v}->{l2v}]", margin)
        growth_ok = growth_ok and margin <= 0.0
    rep.add("no_systematic_growth", float(growth_ok), passed=growth_ok)

    if include_zero_drift_check:
        from .sde import zero_drift

        bz = zero_drift(b.dim)
        ens = sample_exact(grid, h, b.dim, 1, seed, label=("compact", "zero"))
        paths = euler_solve_batch(bz, x0, grid, ens.paths)
        slices = malliavin_terminal_all_theta(bz, paths, grid, t_index, h)
        got = float(double_increment_statistic(slices, grid.dt, beta)[0])
        want = kernel_difference_double_integral(grid, h, t_index, 1.0 + 2.0 * beta)
        want *= b.dim**2  # entrywise norm of K I_d scales by d per factor
        gap = abs(got - want) / want
        rep.add("zero_drift_vs_kernel_integral", gap, tolerance=1e-10, passed=gap <= 1e-10)
    rep.duration_seconds = time.perf_counter() - t0
    return rep


def kernel_difference_double_integral(grid: TimeGrid, hurst, t_index: int, exponent: float) -> float:
    """Node-pair quadrature of the kernel-difference double integral.

    Same discretization as the Malliavin double-increment statistic: theta
    nodes 1..t_index-1, diagonal excluded, cell weight dt^2.
    """
    nodes = grid.nodes
    kvals = volterra_kernel(
        nodes[t_index], nodes[1:t_index], hurst
    )
    dt = grid.dt
    total = 0.0
    n = len(kvals)
    for a in range(n):
        diff = kvals[a + 1 :] - kvals[a]
        gaps = dt * np.arange(1, n - a)
        total += 2.0 * dt * dt * float(np.sum(diff**2 / gaps**exponent))
    return total


# ---------------------------------------------------------------------------
# moment scan across the H-threshold
# ---------------------------------------------------------------------------


def flow_threshold(d: int, k: int) -> float:
    """H* = 1/(d(2k+1)), below which the k-th flow moments stay bounded."""
    return 1.0 / (d * (2 * k + 1))


def flow_derivatives_report(
    hurst: float = 0.2,
    steps: int = 2**7,
    horizon: float = 1.0,
    n_paths: int = 8,
    fd_step: float = 1e-3,
    seed: SeedSpec = SeedSpec(0),
) -> ExperimentReport:
    """Variational first and second derivatives against finite differences.

    Both run on the same discrete flow map, so agreement is limited only by
    the O(fd_step^2) difference truncation.
    """
    from .sde import gauss_pulse_drift, linear_drift

    t0 = time.perf_counter()
    rep = ExperimentReport(
        "flow-derivatives",
        {
            "hurst": hurst,
            "steps": steps,
            "horizon": horizon,
            "n_paths": n_paths,
            "fd_step": fd_step,
            "seed": seed.master,
        },
    )
    grid = TimeGrid(horizon, steps)
    ens = sample_exact(grid, hurst, 1, n_paths, seed, label=("flowder",))
    cases = [
        ("gauss_pulse", gauss_pulse_drift([1.0], sigma=0.6), 0.3),
        ("linear", linear_drift(-0.8), 0.5),
    ]
    for name, b, x0 in cases:
        _, tensors = variational_flow_batch(b, x0, grid, ens.paths, 2)
        plus = euler_solve_batch(b, x0 + fd_step, grid, ens.paths)[:, -1, 0]
        minus = euler_solve_batch(b, x0 - fd_step, grid, ens.paths)[:, -1, 0]
        center = euler_solve_batch(b, x0, grid, ens.paths)[:, -1, 0]
        fd1 = (plus - minus) / (2.0 * fd_step)
        fd2 = (plus - 2.0 * center + minus) / fd_step**2
        gap1 = float(np.max(np.abs(tensors[1][:, -1, 0, 0] - fd1)))
        gap2 = float(np.max(np.abs(tensors[2][:, -1, 0, 0, 0] - fd2)))
        tol1 = 10.0 * fd_step**2 + 1e-10
        tol2 = 1e4 * fd_step**2 + 1e-8
        rep.add(f"order1_gap[{name}]", gap1, tolerance=tol1, passed=gap1 <= tol1)
        rep.add(f"order2_gap[{name}]", gap2, tolerance=tol2, passed=gap2 <= tol2)
    rep.duration_seconds = time.perf_counter() - t0
    return rep


def default_stencil(center, dim: int) -> np.ndarray:
    """Nine probe points on a cube of radius 1 around the center."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (dim,))
    if dim == 1:
        offsets = np.linspace(-1.0, 1.0, 9)[:, None]
    elif dim == 2:
        g = np.array([-1.0, 0.0, 1.0])
        offsets = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    else:
        raise ValueError("stencil implemented for d <= 2")
    return center[None, :] + offsets


def moment_scan_report(
    b: DriftSpec,
    k: int,
    p: int,
    h_grid,
    levels,
    steps: int = 2**7,
    horizon: float = 1.0,
    t: float = 1.0,
    n_paths: int = 256,
    seed: SeedSpec = SeedSpec(0),
    stencil=None,
    fd_step: float = 1e-3,
) -> ExperimentReport:
    """Moments of the k-th flow derivative over (H x mollification level).

    Each cell reports the stencil-max of E||d^k X / dx^k||^p at time t with
    its standard error; the deterministic no-noise control reports the
    finite-difference derivative magnitude at the stencil point closest to
    the drift discontinuity.
    """
    if p < 2 or p % 2:
        raise ValueError("p must be an even integer >= 2")
    t0 = time.perf_counter()
    grid = TimeGrid(horizon, steps)
    stencil = default_stencil(0.0, b.dim) if stencil is None else np.asarray(stencil)
    if stencil.size == 0:
        raise ValueError("stencil must not be empty")
    rep = ExperimentReport(
        "flow-scan",
        {
            "drift": b.name,
            "k": k,
            "p": p,
            "h_grid": [float(h) for h in h_grid],
            "levels": list(levels),
            "steps": steps,
            "horizon": horizon,
            "t": t,
            "n_paths": n_paths,
            "seed": seed.master,
            "threshold": flow_threshold(b.dim, k),
        },
    )
    t_index = int(round(t / grid.dt))
    rep.add("H_star", flow_threshold(b.dim, k))
    for h in h_grid:
        # common noise across levels: smooth drifts then scan level-flat
        ens = sample_exact(grid, h, b.dim, n_paths, seed, label=("scan", h))
        for level in levels:
            bn = mollify(b, level) if b.kind == "singular" else b
            worst = -np.inf
            worst_se = 0.0
            for x0 in stencil:
                _, tensors = variational_flow_batch(bn, x0, grid, ens.paths, k)
                flat = tensors[k][:, t_index].reshape(n_paths, -1)
                norms = np.sum(np.abs(flat), axis=1) ** p
                mean = float(np.mean(norms))
                if mean > worst:
                    worst = mean
                    worst_se = float(np.std(norms, ddof=1) / np.sqrt(n_paths))
            rep.add(f"moment[H={h},level={level}]", worst, std_error=worst_se)
    # deterministic control: no noise, finite differences of the flow map
    zero_noise = np.zeros((1, steps + 1, b.dim))
    for level in levels:
        bn = mollify(b, level) if b.kind == "singular" else b
        base_point = stencil[np.argmin(np.linalg.norm(stencil, axis=1))]
        bumped = []
        for sign in (+1.0, -1.0):
            x0 = base_point.copy()
            x0[0] += sign * fd_step
            sol = euler_solve_batch(bn, x0, grid, zero_noise)
            bumped.append(sol[0, t_index, :])
        fd = np.linalg.norm(bumped[0] - bumped[1]) / (2.0 * fd_step)
        rep.add(f"deterministic_fd[level={level}]", float(fd))
    rep.duration_seconds = time.perf_counter() - t0
    return rep
