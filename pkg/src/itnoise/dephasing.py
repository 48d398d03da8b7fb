"""Dephasing factor of the interferometer driven by inertial torsion noise.

Two independent routes:

* :func:`gamma_spectral` integrates the torsion-noise spectrum against the
  transfer function,
  ``Gamma = m**2 / (4 hbar**2) * int S_itn(w) F(w) dw`` over ``|w| >= w_min``.
* :func:`gamma_montecarlo` simulates the box, forms the accumulated phase
  ``dphi = m / (2 hbar) int theta_dot**2 (x_R**2 - x_L**2) dt`` per trajectory
  and takes its variance.

With the calibrated spectrum the two agree directly (for ``w_min = 0``); the
paper-literal spectrum is ``4 pi`` times larger, see ``spectra``.

The remaining helpers translate a dephasing factor into visibility, purity,
an entanglement-witness value and the gravimeter sensitivity bound.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize

from .constants import HBAR
from .conventions import Convention
from .errors import ConfigurationError, DomainError, InsufficientSamplesError
from .interferometer import InterferometerGeometry, build_trajectories, transfer_exact
from .langevin import LangevinParams, SimulationGrid, simulate_block
from .quadrature import gk_adaptive
from .spectra import itn_values

RESONANCE_HALF_WIDTHS = 50.0  # K: resonance window is 2 omega +- K gamma
DEFAULT_RTOL = 1e-4
TAIL_FRACTION = 1e-6
_LOG_POINTS_PER_DECADE = 8
MIN_TRAJECTORIES = 100
MAX_RELATIVE_STAT_ERROR = 0.2


class Method(str, Enum):
    SPECTRAL = "spectral"
    MONTE_CARLO = "mc"


class Application(str, Enum):
    GRAVIMETER = "gravimeter"
    QGEM = "qgem"
    CUSTOM = "custom"


DEFAULT_THRESHOLDS = {Application.GRAVIMETER: 1e-6, Application.QGEM: 0.01}


@dataclass
class DephasingResult:
    gamma_value: float
    method: Method
    omega_min: float  # rad/s
    omega_max: float  # rad/s
    quadrature_error_estimate: float = 0.0
    n_trajectories: int = 0
    statistical_error: float = 0.0
    convention: Convention | None = None
    # Monte Carlo extras: half-variance convention and the deterministic phase offset.
    gamma_half: float | None = None
    mean_phase: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["method"] = self.method.value
        out["convention"] = self.convention.value if self.convention else None
        return out


@dataclass(frozen=True)
class ThresholdVerdict:
    threshold: float
    passes: bool
    application: Application
    gamma_value: float


def prefactor(geom: InterferometerGeometry) -> float:
    """``m**2 / (4 hbar**2)`` in 1/(m^4 s^2)."""
    return geom.particle_mass**2 / (4 * HBAR**2)


def _tail_bound(geom, params, convention, w_max) -> float:
    """Bound on ``int_{w_max}^inf S F dw`` from ``S <= B / w**2`` and the F envelope."""
    probe = w_max * np.logspace(0, 6, 121)
    b = float(np.max(itn_values(params, probe, convention) * probe**2))
    b = max(b, 4 * params.amplitude_A**2 / params.gamma) * 1.1
    x = w_max * geom.t_accel
    c = 1 + 3 / x + 3 / x**2
    return b * 64 * geom.acceleration**4 * geom.t_accel**4 * c * c / (7 * w_max**7)


def _atan_panel(func, center, gamma, lo, hi, rtol, atol):
    """Integrate ``func(w)`` over [lo, hi] with ``w = center + gamma tan(u)``.

    ``func`` receives the offsets ``w - center``.
    """
    u0, u1 = math.atan((lo - center) / gamma), math.atan((hi - center) / gamma)

    def g(u):
        t = np.tan(u)
        return func(gamma * t) * gamma * (1 + t * t)

    return gk_adaptive(g, np.linspace(u0, u1, 9), rtol=rtol, atol=atol)


def _log_breaks(lo: float, hi: float, floor: float) -> np.ndarray:
    start = max(lo, floor)
    n = max(2, int(math.ceil(_LOG_POINTS_PER_DECADE * math.log10(hi / start))) + 1)
    pts = np.geomspace(start, hi, n)
    if lo < start:
        pts = np.concatenate([[lo], pts])
    return pts


def gamma_spectral(
    geom: InterferometerGeometry,
    params: LangevinParams,
    total_time: float | None = None,
    *,
    convention: Convention = Convention.PAPER_LITERAL,
    omega_min: float | None = None,
    rtol: float = DEFAULT_RTOL,
    appendix_pi: bool = False,
) -> DephasingResult:
    """Dephasing factor from the spectral overlap of noise and transfer function.

    ``omega_min`` defaults to ``2 pi / total_time`` and ``total_time`` to the
    interferometer loop time.  The integral runs over both signs of
    frequency (twice the positive half-line).  Under ``CALIBRATED`` the
    measure is ``dw / (2 pi)`` and the spectrum is the calibrated one, which
    makes the result the variance of the phase.
    """
    if params.gamma <= 0:
        raise DomainError("gamma_spectral needs gamma > 0")
    convention = Convention(convention)
    if total_time is None:
        total_time = geom.total_time
    if not total_time > 0:
        raise DomainError("total_time must be positive")
    w_min = 2 * math.pi / total_time if omega_min is None else float(omega_min)
    if w_min < 0:
        raise DomainError("omega_min must be non-negative")
    pref = prefactor(geom) * (1 / (2 * math.pi) if convention is Convention.CALIBRATED else 1.0)
    omega, gam = params.omega_rot, params.gamma
    w_max = 10 * max(2 * omega, 2 * math.pi / geom.total_time, gam, w_min)
    if params.amplitude_A == 0:
        return DephasingResult(0.0, Method.SPECTRAL, w_min, w_max, 0.0, convention=convention)

    def integrand(w):
        return itn_values(params, w, convention, appendix_pi=appendix_pi) * transfer_exact(geom, w)

    def integrand_res(d):
        s = itn_values(params, None, convention, appendix_pi=appendix_pi, offset=d)
        return s * transfer_exact(geom, 2 * omega + d)

    kw = RESONANCE_HALF_WIDTHS * gam
    special = []  # (lo, hi, center, func)
    separated = kw < 0.5 * omega
    if separated and 2 * omega + kw > w_min:
        special.append((max(2 * omega - kw, w_min), 2 * omega + kw, 2 * omega, integrand_res))
    if separated and w_min < kw:
        special.append((w_min, kw, 0.0, integrand))

    value, error, intervals, evals = 0.0, 0.0, 0, 0
    for lo, hi, center, func in special:
        r = _atan_panel(func, center, gam, lo, hi, rtol, 0.0)
        value += r.value
        error += r.error
        intervals += r.n_intervals
        evals += r.n_evals

    def plain(lo, hi):
        # Breakpoints on a log grid, with the special windows cut out.
        floor = min(gam, omega if omega > 0 else gam, 2 * math.pi / geom.total_time) * 1e-3
        pts = _log_breaks(lo, hi, floor)
        pieces = [(a, b) for a, b in zip(pts[:-1], pts[1:])]
        for slo, shi, _, _ in special:
            cut = []
            for a, b in pieces:
                if b <= slo or a >= shi:
                    cut.append((a, b))
                    continue
                if a < slo:
                    cut.append((a, slo))
                if b > shi:
                    cut.append((shi, b))
            pieces = cut
        total = 0.0
        err = 0.0
        n_int = n_ev = 0
        for a, b in _contiguous(pieces):
            r = gk_adaptive(integrand, _breaks_within(a, b, pts), rtol=rtol, atol=0.5 * rtol * abs(value))
            total += r.value
            err += r.error
            n_int += r.n_intervals
            n_ev += r.n_evals
        return total, err, n_int, n_ev

    v, e, ni, ne = plain(w_min, w_max)
    value += v
    error += e
    intervals += ni
    evals += ne
    tail = _tail_bound(geom, params, convention, w_max)
    while tail > TAIL_FRACTION * abs(value):
        new_max = 10 * w_max
        v, e, ni, ne = plain(w_max, new_max)
        value += v
        error += e
        intervals += ni
        evals += ne
        w_max = new_max
        tail = _tail_bound(geom, params, convention, w_max)
    gamma_value = 2 * pref * value
    err_abs = 2 * pref * (error + tail)
    return DephasingResult(
        gamma_value=gamma_value,
        method=Method.SPECTRAL,
        omega_min=w_min,
        omega_max=w_max,
        quadrature_error_estimate=err_abs,
        convention=convention,
        diagnostics={"n_intervals": intervals, "n_evals": evals, "tail_bound": 2 * pref * tail},
    )


def _contiguous(pieces):
    """Merge adjacent (a, b) pieces into maximal contiguous runs."""
    runs = []
    for a, b in sorted(pieces):
        if runs and runs[-1][1] == a:
            runs[-1] = (runs[-1][0], b)
        else:
            runs.append((a, b))
    return runs


def _breaks_within(a, b, pts):
    inner = pts[(pts > a) & (pts < b)]
    return np.concatenate([[a], inner, [b]])


def _phase_weights(geom: InterferometerGeometry, dt: float) -> np.ndarray:
    """Trapezoid weights times ``m / (2 hbar) (x_R**2 - x_L**2)`` on ``[0, T]``."""
    T = geom.total_time
    n = int(round(T / dt))
    if n < 2 or abs(n * dt - T) > 1e-9 * T:
        raise ConfigurationError(
            f"dt = {dt} must divide the interferometer time {T} into an integer number of steps",
            key="dt",
        )
    times = np.arange(n + 1) * dt
    g = build_trajectories(geom).path_difference()(times)
    w = np.full(n + 1, dt)
    w[0] = w[-1] = dt / 2
    return geom.particle_mass / (2 * HBAR) * g * w


def phase_samples(
    geom: InterferometerGeometry,
    params: LangevinParams,
    grid: SimulationGrid,
    n_trajectories: int,
    *,
    block_size: int = 1024,
    threads: int = 1,
) -> np.ndarray:
    """Accumulated phase ``dphi`` of each trajectory, in trajectory order."""
    weights = _phase_weights(geom, grid.dt)
    if grid.n_steps < len(weights):
        raise ConfigurationError(
            f"simulation covers {grid.duration} s, shorter than the interferometer time "
            f"{geom.total_time} s",
            key="n_steps",
        )
    short = SimulationGrid(grid.dt, len(weights), grid.burn_in_steps, grid.master_seed, grid.burn_in_limit)
    starts = list(range(0, n_trajectories, block_size))

    def block(start):
        idx = range(start, min(start + block_size, n_trajectories))
        _, theta_dot = simulate_block(params, short, idx)
        return (theta_dot**2) @ weights

    if n_trajectories < 1:
        raise ConfigurationError("n_trajectories must be >= 1", key="n_trajectories")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(s) for s in starts]
    return np.concatenate(parts)


def gamma_montecarlo(
    geom: InterferometerGeometry,
    params: LangevinParams,
    grid: SimulationGrid,
    n_trajectories: int,
    *,
    block_size: int = 1024,
    threads: int = 1,
    check_error: bool = True,
) -> DephasingResult:
    """Dephasing factor as the sample variance of the accumulated phase.

    ``gamma_value`` is ``E[(dphi - E dphi)**2]``; ``gamma_half`` is half of
    that, and ``mean_phase`` the deterministic offset ``E[dphi]``.
    ``statistical_error`` is the standard error of the variance estimate.
    """
    if n_trajectories < MIN_TRAJECTORIES:
        raise ConfigurationError(
            f"at least {MIN_TRAJECTORIES} trajectories are needed", key="n_trajectories"
        )
    phi = phase_samples(geom, params, grid, n_trajectories, block_size=block_size, threads=threads)
    mean = float(np.mean(phi))
    dev = phi - mean
    var = float(np.sum(dev * dev) / (len(phi) - 1))
    m4 = float(np.mean(dev**4))
    se = math.sqrt(max(m4 - var * var, 0.0) / len(phi))
    if check_error and se > MAX_RELATIVE_STAT_ERROR * var:
        raise InsufficientSamplesError(
            f"relative statistical error {se / var:.2f} exceeds {MAX_RELATIVE_STAT_ERROR}"
        )
    return DephasingResult(
        gamma_value=var,
        method=Method.MONTE_CARLO,
        omega_min=0.0,
        omega_max=math.pi / grid.dt,
        n_trajectories=n_trajectories,
        statistical_error=se,
        convention=Convention.CALIBRATED,
        gamma_half=var / 2,
        mean_phase=mean,
    )


def visibility_loss(gamma: float) -> float:
    """Interference visibility ``exp(-Gamma)``."""
    _check_gamma(gamma)
    return math.exp(-gamma)


def purity(gamma: float) -> float:
    """Purity ``(1 + exp(-2 Gamma)) / 2`` of the dephased spin state."""
    _check_gamma(gamma)
    return 0.5 * (1 + math.exp(-2 * gamma))


def qgem_witness(gamma: float, phi_g: float) -> float:
    """Witness expectation; negative means entanglement is detected."""
    _check_gamma(gamma)
    return (1 - math.exp(-2 * gamma)) / 4 - math.exp(-gamma / 2) * math.sin(phi_g)


def qgem_boundary(phi_g: float) -> float:
    """Largest dephasing factor at which the witness still detects entanglement."""
    if not 0 < phi_g < math.pi:
        raise DomainError("phi_g must lie in (0, pi)")
    hi = 1.0
    while qgem_witness(hi, phi_g) < 0:
        hi *= 2
    return optimize.brentq(qgem_witness, 0.0, hi, args=(phi_g,), xtol=1e-15, rtol=1e-14)


def gravimeter_gamma_bound(sigma_g: float, mass: float, delta_z: float, trap_omega: float) -> float:
    """Dephasing tolerated by a gravimeter of sensitivity ``sigma_g`` (m/s^2).

    ``(16 pi m sigma_g dz / (hbar omega0))**2``; ``trap_omega`` is angular.
    """
    for name, v in (("mass", mass), ("delta_z", delta_z), ("trap_omega", trap_omega)):
        if not v > 0:
            raise DomainError(f"{name} must be positive")
    if sigma_g < 0:
        raise DomainError("sigma_g must be non-negative")
    return (16 * math.pi * mass * sigma_g * delta_z / (HBAR * trap_omega)) ** 2


def verdict(gamma: float, application: Application | str = Application.QGEM, threshold: float | None = None) -> ThresholdVerdict:
    application = Application(application)
    if threshold is None:
        if application is Application.CUSTOM:
            raise ConfigurationError("a custom verdict needs an explicit threshold", key="threshold")
        threshold = DEFAULT_THRESHOLDS[application]
    return ThresholdVerdict(threshold, bool(gamma < threshold), application, gamma)


def _check_gamma(gamma: float) -> None:
    if not gamma >= 0:
        raise DomainError(f"dephasing factor must be non-negative, got {gamma!r}")
