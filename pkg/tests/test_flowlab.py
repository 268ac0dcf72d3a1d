import numpy as np
import pytest

from fbmlab.core import make_grid
from fbmlab.fbm import sample_exact
from fbmlab.flowlab import (
    compactness_report,
    default_stencil,
    double_increment_statistic,
    flow_threshold,
    kernel_difference_double_integral,
    malliavin_derivative,
    malliavin_terminal_all_theta,
    moment_scan_report,
    variational_flow,
    variational_flow_batch,
)
from fbmlab.kernel import volterra_kernel
from fbmlab.sde import (
    euler_solve_batch,
    gauss_pulse_drift,
    linear_drift,
    sign_indicator_drift,
    zero_drift,
)


def test_flow_zero_drift_identity(seed):
    grid = make_grid(1.0, 32)
    ens = sample_exact(grid, 0.2, 2, 3, seed)
    paths, tensors = variational_flow_batch(zero_drift(2), 0.0, grid, ens.paths, 2)
    assert np.allclose(tensors[1], np.eye(2))
    assert np.allclose(tensors[2], 0.0)


def test_flow_linear_drift_exponential(seed):
    # d/dx X_t = exp(rate * t) solved to Euler accuracy
    rate = -0.8
    grid = make_grid(1.0, 2**10)
    ens = sample_exact(grid, 0.3, 1, 2, seed)
    _, tensors = variational_flow_batch(linear_drift(rate), 0.5, grid, ens.paths, 1)
    got = tensors[1][:, -1, 0, 0]
    assert np.allclose(got, np.exp(rate), rtol=2e-3)


def test_flow_matches_finite_differences(seed):
    # variational tensors are the exact derivatives of the discrete flow
    grid = make_grid(1.0, 2**7)
    ens = sample_exact(grid, 0.2, 1, 4, seed)
    b = gauss_pulse_drift([1.0], sigma=0.6)
    x0, h = 0.3, 1e-3
    _, tensors = variational_flow_batch(b, x0, grid, ens.paths, 2)
    plus = euler_solve_batch(b, x0 + h, grid, ens.paths)[:, -1, 0]
    minus = euler_solve_batch(b, x0 - h, grid, ens.paths)[:, -1, 0]
    center = euler_solve_batch(b, x0, grid, ens.paths)[:, -1, 0]
    fd1 = (plus - minus) / (2 * h)
    fd2 = (plus - 2 * center + minus) / h**2
    assert np.allclose(tensors[1][:, -1, 0, 0], fd1, atol=5e-6)
    assert np.allclose(tensors[2][:, -1, 0, 0, 0], fd2, atol=5e-3)


def test_flow_order_cap(seed):
    grid = make_grid(1.0, 8)
    ens = sample_exact(grid, 0.2, 1, 1, seed)
    with pytest.raises(ValueError):
        variational_flow_batch(gauss_pulse_drift([1.0]), 0.0, grid, ens.paths, 4)


def test_flow_single_wrapper(seed):
    grid = make_grid(1.0, 16)
    ens = sample_exact(grid, 0.2, 1, 1, seed)
    state = variational_flow(zero_drift(1), 0.0, grid, ens.path(0), 1)
    assert state.tensors[1].shape == (17, 1, 1)
    assert np.allclose(state.tensors[1], 1.0)


# ---------------------------------------------------------------------------
# Malliavin slices
# ---------------------------------------------------------------------------


def test_malliavin_zero_drift_is_kernel(seed):
    h = 0.25
    grid = make_grid(1.0, 64)
    theta_idx = 16
    path = np.zeros((65, 1))
    sl = malliavin_derivative(zero_drift(1), path, grid, theta_idx, h)
    nodes = grid.nodes
    for i in range(theta_idx + 1, 65):
        want = float(volterra_kernel(nodes[i], nodes[theta_idx], h))
        assert sl.values[i, 0, 0] == pytest.approx(want, rel=1e-12)
    assert np.all(sl.values[:theta_idx] == 0.0)


def test_malliavin_theta_zero_rejected(seed):
    grid = make_grid(1.0, 16)
    with pytest.raises(ValueError):
        malliavin_derivative(zero_drift(1), np.zeros((17, 1)), grid, 0, 0.2)


def test_malliavin_linear_drift_variation_of_constants(seed):
    # d=1, b = rate x: D_theta X_t = K(t,theta) + rate int_theta^t e^{rate(t-u)} K(u,theta) du
    h, rate = 0.3, 0.6
    grid = make_grid(1.0, 2**10)
    theta_idx = grid.steps // 4
    ens = sample_exact(grid, h, 1, 1, seed)
    path = euler_solve_batch(linear_drift(rate), 0.0, grid, ens.paths)[0]
    sl = malliavin_derivative(linear_drift(rate), path, grid, theta_idx, h)
    nodes = grid.nodes
    theta = nodes[theta_idx]
    t_end = nodes[-1]
    u = nodes[theta_idx + 1 : -1]
    integrand = np.exp(rate * (t_end - u)) * volterra_kernel(u, theta, h)
    integral = np.trapezoid(integrand, u)
    want = float(volterra_kernel(t_end, theta, h)) + rate * integral
    assert sl.values[-1, 0, 0] == pytest.approx(want, rel=2e-2)


def test_malliavin_linear_in_inhomogeneity(seed):
    h = 0.2
    grid = make_grid(1.0, 64)
    ens = sample_exact(grid, h, 1, 1, seed)
    b = gauss_pulse_drift([0.8])
    path = euler_solve_batch(b, 0.0, grid, ens.paths)[0]
    base = malliavin_derivative(b, path, grid, 10, h).values
    doubled = malliavin_derivative(b, path, grid, 10, h, kernel_scale=2.0).values
    assert np.allclose(doubled, 2.0 * base, atol=1e-12)


def test_malliavin_all_theta_matches_single(seed):
    h = 0.2
    grid = make_grid(1.0, 2**6)
    ens = sample_exact(grid, h, 1, 3, seed)
    b = gauss_pulse_drift([1.0], sigma=0.8)
    paths = euler_solve_batch(b, 0.1, grid, ens.paths)
    t_index = grid.steps
    slices = malliavin_terminal_all_theta(b, paths, grid, t_index, h)
    for p in range(3):
        for theta_idx in (1, 7, 31):
            single = malliavin_derivative(b, paths[p], grid, theta_idx, h)
            assert slices[p, theta_idx - 1, 0, 0] == pytest.approx(
                single.values[t_index, 0, 0], rel=1e-10
            )


def test_zero_drift_statistic_equals_kernel_integral(seed):
    h = 0.15
    grid = make_grid(1.0, 2**6)
    t_index = grid.steps
    paths = np.zeros((1, grid.steps + 1, 1))
    slices = malliavin_terminal_all_theta(zero_drift(1), paths, grid, t_index, h)
    beta = 0.1
    got = float(double_increment_statistic(slices, grid.dt, beta)[0])
    want = kernel_difference_double_integral(grid, h, t_index, 1.0 + 2.0 * beta)
    assert got == pytest.approx(want, rel=1e-12)


def test_compactness_report_small(seed):
    rep = compactness_report(
        sign_indicator_drift(),
        levels=[4, 8],
        hurst=0.1,
        steps=2**7,
        n_paths=96,
        seed=seed,
    )
    assert rep.all_passed
    names = [s.name for s in rep.stats]
    assert "zero_drift_vs_kernel_integral" in names
    assert "sup_double_integral" in names


# ---------------------------------------------------------------------------
# moment scan
# ---------------------------------------------------------------------------


def test_flow_thresholds():
    assert flow_threshold(1, 1) == pytest.approx(1.0 / 3.0)
    assert flow_threshold(1, 2) == pytest.approx(1.0 / 5.0)
    assert flow_threshold(2, 1) == pytest.approx(1.0 / 6.0)


def test_default_stencil_shapes():
    assert default_stencil(0.0, 1).shape == (9, 1)
    assert default_stencil([0.0, 0.0], 2).shape == (9, 2)


def test_moment_scan_smooth_level_independent(seed):
    rep = moment_scan_report(
        gauss_pulse_drift([1.0]),
        k=1,
        p=2,
        h_grid=[0.1],
        levels=[4, 8],
        steps=2**5,
        n_paths=16,
        seed=seed,
    )
    vals = [s.value for s in rep.stats if s.name.startswith("moment")]
    assert vals[0] == pytest.approx(vals[1], rel=1e-12)


def test_moment_scan_rejects_odd_p(seed):
    with pytest.raises(ValueError):
        moment_scan_report(
            sign_indicator_drift(), k=1, p=3, h_grid=[0.1], levels=[4], seed=seed
        )


def test_moment_scan_deterministic_control_grows(seed):
    rep = moment_scan_report(
        sign_indicator_drift(),
        k=1,
        p=2,
        h_grid=[0.1],
        levels=[4, 8, 16, 32],
        steps=2**8,
        n_paths=8,
        seed=seed,
    )
    fd = [s.value for s in rep.stats if s.name.startswith("deterministic_fd")]
    # the no-noise flow derivative climbs toward the singular limit t/h
    assert all(f2 > f1 for f1, f2 in zip(fd, fd[1:]))
    assert fd[-1] > 2.0 * fd[0]
