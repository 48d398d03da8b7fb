import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from itnoise.conventions import Convention, Sidedness
from itnoise.errors import (
    ConfigurationError,
    ConventionMismatchError,
    DomainError,
    InconclusivePeakError,
    SingularPointError,
    TailCoverageError,
)
from itnoise.langevin import LangevinParams, SimulationGrid, ensemble
from itnoise.spectra import (
    CONVOLUTION_TO_ITN,
    Spectrum,
    estimate_psd,
    estimate_psd_arrays,
    itn_from_velocity,
    itn_values,
    peak_metrics,
    psd_poles,
    s_itn_analytic,
    s_theta_analytic,
    s_theta_dot,
    self_convolve,
    symmetric_grid,
)

CAL, LIT = Convention.CALIBRATED, Convention.PAPER_LITERAL


def _velocity_psd(p, u):
    return p.amplitude_A * u * u / ((p.omega_rot**2 - u * u) ** 2 + p.gamma**2 * u * u)


def _convolution_quadpack(p, w):
    """int S_v(u) S_v(w - u) du with the four resonance locations as breakpoints."""
    f = lambda u: _velocity_psd(p, u) * _velocity_psd(p, w - u)
    o = p.omega_rot
    pts = sorted({-o, o, w - o, w + o})
    pieces = [-np.inf, *pts, np.inf]
    total = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        total += integrate.quad(f, a, b, limit=500, epsabs=0, epsrel=1e-11)[0]
    return total


@pytest.mark.parametrize("ratio", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("w", [0.0, 0.7, 2.0, 5.5])
def test_convolution_identity_against_quadpack(ratio, w):
    p = LangevinParams(1.0, ratio, 1.0)
    conv = _convolution_quadpack(p, w)
    printed = itn_values(p, w, LIT)
    assert conv == pytest.approx(CONVOLUTION_TO_ITN * printed, rel=1e-7)
    assert itn_values(p, w, CAL) == pytest.approx(conv / math.pi, rel=1e-7)


def test_itn_dc_and_resonance_values():
    p = LangevinParams(2.0, 0.02, 3.0)
    assert itn_values(p, 0.0) == pytest.approx(9.0 / 0.02**3, rel=1e-12)
    assert itn_values(p, 4.0) == pytest.approx(9.0 / (2 * 0.02**3), rel=1e-3)


def test_offset_form_matches_direct():
    p = LangevinParams(2 * math.pi, 1e-3, 1.0)
    d = np.array([-0.5, -1e-3, 0.0, 2e-3, 0.4])
    direct = itn_values(p, 2 * p.omega_rot + d)
    assert np.allclose(itn_values(p, None, offset=d), direct, rtol=1e-9)


def test_appendix_pi_variant():
    p = LangevinParams(1.0, 0.1, 1.0)
    assert itn_values(p, 1.3, appendix_pi=True) == pytest.approx(math.pi * itn_values(p, 1.3))
    with pytest.raises(DomainError):
        itn_values(p, 1.3, CAL, appendix_pi=True)
    with pytest.raises(DomainError):
        itn_values(LangevinParams(1.0, 0.0, 1.0), 1.0)


def test_self_convolve_gaussian():
    # exp(-u^2/2) convolved with itself is sqrt(pi) exp(-w^2/4)
    w = symmetric_grid(20.0, 0.01)
    s = Spectrum(w, np.exp(-(w**2) / 2), CAL)
    out = self_convolve(s)
    inner = np.abs(w) < 8
    np.testing.assert_allclose(out.values[inner], math.sqrt(math.pi) * np.exp(-w[inner] ** 2 / 4), rtol=1e-9)


def test_itn_from_velocity_matches_analytic():
    p = LangevinParams(1.0, 0.3, 1.0)
    w = symmetric_grid(4000.0, 0.005)
    vel = s_theta_dot(s_theta_analytic(p, w, CAL))
    num = itn_from_velocity(vel)
    keep = np.abs(w) < 10
    ref = itn_values(p, w[keep], CAL)
    assert np.max(np.abs(num.values[keep] / ref - 1)) < 1e-2
    with pytest.raises(ConventionMismatchError):
        itn_from_velocity(s_theta_dot(s_theta_analytic(p, w, LIT)))


def test_tail_coverage_error():
    w = symmetric_grid(5.0, 0.01)
    narrow = s_theta_dot(s_theta_analytic(LangevinParams(1.0, 0.3, 1.0), w, CAL))
    with pytest.raises(TailCoverageError) as info:
        self_convolve(narrow)
    assert info.value.truncation_bound > 0
    with pytest.raises(DomainError):
        self_convolve(Spectrum(np.arange(4.0), np.ones(4), CAL))


def test_itn_resonance_shape():
    omega = 2 * math.pi
    p = LangevinParams(omega, omega / 100, 1.0)
    g = p.gamma
    peak = itn_values(p, 2 * omega)
    assert itn_values(p, 2 * omega + g) / peak == pytest.approx(0.5, abs=0.01)
    assert itn_values(p, 2 * omega - g) / peak == pytest.approx(0.5, abs=0.01)
    w = np.linspace(omega, 3 * omega, 200001)
    rep = peak_metrics(s_itn_analytic(p, w))
    assert rep.peak_omega == pytest.approx(2 * omega, rel=1e-4)
    assert rep.q_factor == pytest.approx(omega / g, rel=0.05)
    hi = np.array([1e4, 1e5]) * omega
    v = itn_values(p, hi)
    assert math.log(v[1] / v[0]) / math.log(10) == pytest.approx(-2, abs=0.05)


def test_theta_spectrum_variance():
    p = LangevinParams(3.0, 0.4, 2.0)
    f = lambda u: float(s_theta_analytic(p, [u]).values[0])
    total = integrate.quad(f, -np.inf, np.inf, points=None, limit=400)[0]
    assert total / (2 * math.pi) == pytest.approx(p.amplitude_A / (2 * p.gamma * p.omega_rot**2), rel=1e-8)
    with pytest.raises(SingularPointError):
        s_theta_analytic(LangevinParams(1.0, 0.0, 1.0), [0.0, 1.0])


def test_spectrum_arithmetic_and_tags():
    w = np.linspace(-1, 1, 5)
    a = Spectrum(w, np.ones(5), CAL)
    b = Spectrum(w, 2 * np.ones(5), CAL)
    assert np.all((a + b).values == 3)
    assert np.all((2 * a).values == 2)
    with pytest.raises(ConventionMismatchError):
        a + Spectrum(w, np.ones(5), LIT)
    with pytest.raises(DomainError):
        a + Spectrum(w * 2, np.ones(5), CAL)
    with pytest.raises(TypeError):
        a * b
    one = a.to_one_sided()
    assert one.sidedness is Sidedness.ONE_SIDED
    assert one.values[0] == 1 and np.all(one.values[1:] == 2)
    assert a.variance() == pytest.approx(2 / (2 * math.pi))
    assert Spectrum(w, np.ones(5), LIT).variance() == pytest.approx(2.0)


@pytest.mark.parametrize(
    "omega, values",
    [([0.0, 1.0, 0.5], [1, 1, 1]), ([0.0, 1.0], [1.0, -1.0]), ([0.0, 1.0], [1.0, np.nan])],
)
def test_spectrum_validation(omega, values):
    with pytest.raises(DomainError):
        Spectrum(np.array(omega), np.array(values, dtype=float), CAL)


def test_welch_white_noise_level():
    rng = np.random.default_rng(0)
    dt, sigma = 0.01, 2.0
    data = sigma * rng.standard_normal((50, 4096))
    est = estimate_psd_arrays(data, dt, 256)
    assert est.convention is CAL
    assert np.mean(est.values) == pytest.approx(sigma**2 * dt, rel=0.01)
    assert est.variance() == pytest.approx(sigma**2, rel=0.01)


def test_estimate_psd_from_trajectories():
    p = LangevinParams(2.0, 0.5, 1.0)
    trajs = ensemble(p, SimulationGrid(0.04, 1024, master_seed=5), 40)
    est = estimate_psd(trajs, 256)
    assert est.variance() == pytest.approx(p.amplitude_A / (2 * p.gamma * p.omega_rot**2), rel=0.1)
    sq = estimate_psd(trajs, 256, "theta_dot_squared")
    assert sq.quantity == "theta_dot_squared"
    with pytest.raises(ConfigurationError):
        estimate_psd(trajs, 4)
    with pytest.raises(ConfigurationError):
        estimate_psd(trajs, 4096)
    with pytest.raises(ConfigurationError):
        estimate_psd([], 256)
    with pytest.raises(ConfigurationError):
        estimate_psd(trajs, 256, "phase")


def test_peak_metrics_lorentzian_and_edges():
    p = LangevinParams(10.0, 0.1, 1.0)
    w = np.linspace(0, 20, 400001)
    rep = peak_metrics(s_theta_analytic(p, w, CAL))
    assert rep.peak_omega == pytest.approx(math.sqrt(100 - 0.005), rel=1e-6)
    assert rep.fwhm == pytest.approx(0.1, rel=1e-3)
    assert rep.q_factor == pytest.approx(100, rel=1e-3)
    with pytest.raises(InconclusivePeakError):
        peak_metrics(Spectrum(np.linspace(0, 1, 10), np.linspace(1, 2, 10), CAL))
    with pytest.raises(InconclusivePeakError):
        peak_metrics(s_theta_analytic(p, np.linspace(9.99, 10.01, 11), CAL))


@given(w=st.floats(0.01, 100.0), g=st.floats(1e-4, 300.0))
@settings(max_examples=60)
def test_poles_are_roots_of_denominator(w, g):
    p = LangevinParams(w, g, 1.0)
    poles = list(psd_poles(p))
    assert len(poles) == 4
    scale = max(w, g) ** 4
    for z in poles:
        den = (w * w - z * z) ** 2 + g * g * z * z
        assert abs(den) <= 1e-9 * scale


def test_symmetric_grid():
    g = symmetric_grid(1.0, 0.3)
    assert len(g) == 9 and g[4] == 0 and g[-1] == pytest.approx(1.2)
    with pytest.raises(DomainError):
        symmetric_grid(-1.0, 0.1)
