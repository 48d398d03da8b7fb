import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, linalg

from itnoise.conventions import Convention
from itnoise.errors import ConfigurationError, DomainError
from itnoise.langevin import (
    LangevinParams,
    SimulationGrid,
    default_burn_in_time,
    drift_matrix,
    ensemble,
    exact_transition,
    iter_blocks,
    simulate,
    simulate_block,
    stationary_moments,
)


def _q_by_quadrature(params, h):
    """Noise covariance int_0^h e^{Ms} B e^{M^T s} ds by adaptive quadrature."""
    m = drift_matrix(params)
    b = np.diag([0.0, params.amplitude_A])

    def f(s):
        e = linalg.expm(m * s)
        return (e @ b @ e.T).ravel()

    return integrate.quad_vec(f, 0.0, h, epsabs=0, epsrel=1e-12)[0].reshape(2, 2)


def _phi_closed_form(params, h):
    w, g = params.omega_rot, params.gamma
    # Complex frequency covers the overdamped case too.
    w1 = cmath.sqrt(w * w - g * g / 4)
    c, s, e = cmath.cos(w1 * h), cmath.sin(w1 * h) / w1, math.exp(-g * h / 2)
    return e * np.real(np.array([[c + g / 2 * s, s], [-w * w * s, c - g / 2 * s]]))


@pytest.mark.parametrize(
    "params, h",
    [
        (LangevinParams(2 * math.pi, 1e-2, 1e-10), 1e-3),
        (LangevinParams(2 * math.pi, 1e-10, 1e-6), 0.01),
        (LangevinParams(2.0, 0.5, 1.0), 0.3),
        (LangevinParams(2.0, 5.0, 1.0), 0.4),  # long-step branch, gamma h >= 1
    ],
)
def test_exact_transition_against_quadrature(params, h):
    phi, q = exact_transition(params, h)
    np.testing.assert_allclose(phi, _phi_closed_form(params, h), rtol=1e-11, atol=1e-14)
    ref = _q_by_quadrature(params, h)
    scale = np.sqrt(np.outer(np.diag(ref), np.diag(ref)))
    np.testing.assert_allclose(q / scale, ref / scale, rtol=0, atol=1e-8)


def test_long_step_reaches_stationary_covariance():
    p = LangevinParams(2.0, 0.5, 1.0)
    phi, q = exact_transition(p, 200.0)
    mom = stationary_moments(p)
    np.testing.assert_allclose(np.diag(q), [mom.var_theta, mom.var_theta_dot], rtol=1e-12)
    assert np.max(np.abs(phi)) < 1e-20  # exp(-gamma h / 2) = exp(-50)


@given(
    w=st.floats(0.1, 50.0),
    g=st.floats(1e-6, 20.0),
    h=st.floats(1e-4, 2.0),
)
@settings(max_examples=60, deadline=None)
def test_transition_properties(w, g, h):
    p = LangevinParams(w, g, 1.0)
    phi, q = exact_transition(p, h)
    # Liouville: det expm(M h) = exp(trace(M) h)
    scale = np.max(np.abs(phi)) ** 2
    assert np.linalg.det(phi) == pytest.approx(math.exp(-g * h), rel=1e-8, abs=1e-13 * scale)
    assert np.all(np.linalg.eigvalsh(q) >= -1e-12 * np.max(np.abs(q)))


def test_stationary_moments_conventions():
    p = LangevinParams(2 * math.pi, 1e-10, 1e-6)
    cal = stationary_moments(p, Convention.CALIBRATED)
    lit = stationary_moments(p, Convention.PAPER_LITERAL)
    assert cal.var_theta == pytest.approx(1e-6 / (2e-10 * 4 * math.pi**2))
    assert cal.var_theta_dot == pytest.approx(1e-6 / 2e-10)
    assert lit.var_theta / cal.var_theta == pytest.approx(2 * math.pi)
    with pytest.raises(DomainError):
        stationary_moments(LangevinParams(0.0, 1.0, 1.0))


def test_same_seed_same_path_and_block_equivalence():
    p = LangevinParams(2.0, 0.5, 1.0)
    grid = SimulationGrid(0.01, 200, master_seed=12345)
    a = simulate(p, grid, 7)
    b = simulate(p, grid, 7)
    np.testing.assert_array_equal(a.theta, b.theta)
    theta, theta_dot = simulate_block(p, grid, [3, 7, 11])
    np.testing.assert_array_equal(theta[1], a.theta)
    np.testing.assert_array_equal(theta_dot[1], a.theta_dot)
    other = simulate(p, SimulationGrid(0.01, 200, master_seed=12346), 7)
    assert not np.array_equal(other.theta, a.theta)


def test_chunking_does_not_change_ensemble():
    p = LangevinParams(2.0, 0.5, 1.0)
    grid = SimulationGrid(0.01, 50, master_seed=1)
    big = np.concatenate([t for _, t, _ in iter_blocks(p, grid, 10, block_size=10)])
    small = np.concatenate([t for _, t, _ in iter_blocks(p, grid, 10, block_size=3)])
    np.testing.assert_array_equal(big, small)
    ens = ensemble(p, grid, 10, block_size=4)
    np.testing.assert_array_equal(ens[9].theta, big[9])
    assert ens[9].trajectory_index == 9


def test_stationary_statistics():
    # Variance and lag covariance of the simulated process against the analytic ones.
    p = LangevinParams(2.0, 0.5, 1.0)
    n = 4000
    grid = SimulationGrid(0.04, 26, master_seed=3)
    theta, theta_dot = simulate_block(p, grid, range(n))
    mom = stationary_moments(p)
    tol = 5 * math.sqrt(2 / n)
    assert np.var(theta[:, -1]) == pytest.approx(mom.var_theta, rel=tol)
    assert np.var(theta_dot[:, -1]) == pytest.approx(mom.var_theta_dot, rel=tol)
    tau = 25 * grid.dt
    w1 = math.sqrt(p.omega_rot**2 - p.gamma**2 / 4)
    expected = mom.var_theta * math.exp(-p.gamma * tau / 2) * (
        math.cos(w1 * tau) + p.gamma / (2 * w1) * math.sin(w1 * tau)
    )
    cov = np.mean(theta[:, 0] * theta[:, -1])
    assert abs(cov - expected) < 5 * mom.var_theta / math.sqrt(n)


def test_explicit_initial_state_and_euler():
    p = LangevinParams(2.0, 0.5, 0.0)
    grid = SimulationGrid(1e-3, 1001, burn_in_steps=0)
    exact = simulate(p, grid, initial_state=(1.0, 0.0))
    euler = simulate(p, grid, initial_state=(1.0, 0.0), integrator="euler")
    ref = _phi_closed_form(p, 1.0)[0, 0]
    assert exact.theta[-1] == pytest.approx(ref, rel=1e-10)
    assert euler.theta[-1] == pytest.approx(ref, rel=1e-2)


def test_resolution_and_grid_validation():
    with pytest.raises(ConfigurationError, match="dt"):
        simulate(LangevinParams(2 * math.pi * 100, 1.0, 1.0), SimulationGrid(1e-3, 10))
    with pytest.raises(ConfigurationError):
        SimulationGrid(0.0, 10)
    with pytest.raises(ConfigurationError):
        SimulationGrid(0.1, 1)
    with pytest.raises(ConfigurationError):
        SimulationGrid(0.1, 10, master_seed=2**64)
    with pytest.raises(ConfigurationError):
        simulate(LangevinParams(1.0, 1.0, 1.0), SimulationGrid(0.01, 10), integrator="rk4")


def test_params_validation_and_burn_in():
    with pytest.raises(DomainError):
        LangevinParams(-1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        LangevinParams(0.0, 0.0, 1.0)
    assert default_burn_in_time(LangevinParams(1.0, 1e-10, 1.0)) == 0.0
    assert default_burn_in_time(LangevinParams(1.0, 1.0, 1.0)) == 100.0
