"""Power spectral densities of the box motion and of the inertial torsion noise.

Angle spectrum of the Langevin oscillator::

    S_theta(w) = A / ((omega**2 - w**2)**2 + gamma**2 w**2)

Spectrum of the squared angular velocity (the torsion-noise source)::

    S_itn(w) = A**2 (4 w**4 + 4 (gamma**2 - 3 omega**2) w**2 + 16 omega**4)
               / (gamma (w**2 + gamma**2) (4 gamma**2 w**2 + (w**2 - 4 omega**2)**2))

Normalization
-------------
``S_theta`` is the same array under both conventions; only its meaning
differs (see :class:`~itnoise.conventions.Convention`).  For the squared
velocity, Isserlis' theorem gives the calibrated fluctuation spectrum
``2 (S_v * S_v) / (2 pi)`` where ``S_v = w**2 S_theta`` and ``*`` is the plain
convolution over the real line.  That convolution equals ``(pi / 2) S_itn``
exactly, so

* ``PAPER_LITERAL`` returns ``S_itn`` as printed (optionally times ``pi``,
  the variant that carries an extra residue prefactor);
* ``CALIBRATED`` returns ``S_itn / 2``.

:func:`self_convolve` is the numerical oracle for that identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

from .conventions import Convention, Sidedness
from .errors import (
    ConfigurationError,
    ConventionMismatchError,
    DomainError,
    InconclusivePeakError,
    SingularPointError,
    TailCoverageError,
)
from .langevin import LangevinParams, NoiseTrajectory

# Plain convolution of w**2 S_theta with itself, divided by the printed S_itn.
CONVOLUTION_TO_ITN = math.pi / 2

TAIL_FRACTION = 1e-6


@dataclass(frozen=True)
class Spectrum:
    """PSD samples on an ascending angular-frequency grid.

    Arithmetic between spectra requires identical grids and tags; scalar
    multiplication keeps the tags.
    """

    omega: np.ndarray
    values: np.ndarray
    convention: Convention
    sidedness: Sidedness = Sidedness.TWO_SIDED
    quantity: str = ""

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if omega.shape != values.shape or omega.ndim != 1:
            raise DomainError("omega and values must be 1-D arrays of equal length")
        if omega.size > 1 and np.any(np.diff(omega) <= 0):
            raise DomainError("omega must be strictly ascending")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise DomainError("spectrum values must be finite and non-negative")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "convention", Convention(self.convention))
        object.__setattr__(self, "sidedness", Sidedness(self.sidedness))

    def _check_compatible(self, other: "Spectrum") -> None:
        if self.convention is not other.convention or self.sidedness is not other.sidedness:
            raise ConventionMismatchError(
                f"cannot combine {self.convention.value}/{self.sidedness.value} with "
                f"{other.convention.value}/{other.sidedness.value} spectra"
            )
        if not np.array_equal(self.omega, other.omega):
            raise DomainError("spectra live on different frequency grids")

    def __add__(self, other: "Spectrum") -> "Spectrum":
        if not isinstance(other, Spectrum):
            return NotImplemented
        self._check_compatible(other)
        return replace(self, values=self.values + other.values)

    def __mul__(self, factor) -> "Spectrum":
        if isinstance(factor, Spectrum):
            raise TypeError("spectra can only be scaled by numbers")
        return replace(self, values=self.values * float(factor))

    __rmul__ = __mul__

    def integrate(self) -> float:
        """Trapezoidal integral over the grid, in ``d(omega)``."""
        return float(np.trapezoid(self.values, self.omega))

    def variance(self) -> float:
        """Signal variance implied by the spectrum, ``int S dw / (2 pi)`` when calibrated."""
        total = self.integrate()
        if self.sidedness is Sidedness.ONE_SIDED:
            total *= 2.0
        if self.convention is Convention.CALIBRATED:
            return total / (2 * math.pi)
        return total

    def to_one_sided(self) -> "Spectrum":
        if self.sidedness is Sidedness.ONE_SIDED:
            return self
        keep = self.omega >= 0
        vals = 2.0 * self.values[keep]
        if self.omega[keep][0] == 0:
            vals[0] = self.values[keep][0]
        return replace(self, omega=self.omega[keep], values=vals, sidedness=Sidedness.ONE_SIDED)


@dataclass(frozen=True)
class PeakReport:
    peak_omega: float  # rad/s
    peak_value: float
    fwhm: float  # rad/s
    q_factor: float


@dataclass(frozen=True)
class PoleSet:
    poles: tuple  # four complex numbers, rad/s

    def __iter__(self):
        return iter(self.poles)


def _grid(omega_grid) -> np.ndarray:
    w = np.asarray(omega_grid, dtype=float)
    if w.ndim != 1 or not np.all(np.isfinite(w)):
        raise DomainError("frequency grid must be a finite 1-D array")
    return w


def s_theta_analytic(
    params: LangevinParams, omega_grid, convention: Convention = Convention.PAPER_LITERAL
) -> Spectrum:
    """Lorentzian angle spectrum, rad^2 s."""
    w = _grid(omega_grid)
    denom = (params.omega_rot**2 - w**2) ** 2 + params.gamma**2 * w**2
    bad = np.nonzero(denom == 0)[0]
    if bad.size:
        raise SingularPointError("undamped resonance lies on the grid", int(bad[0]))
    return Spectrum(w, params.amplitude_A / denom, convention, quantity="theta")


def s_theta_dot(spectrum: Spectrum) -> Spectrum:
    """Angular-velocity spectrum, ``w**2`` times the angle spectrum."""
    return replace(spectrum, values=spectrum.omega**2 * spectrum.values, quantity="theta_dot")


def itn_values(
    params: LangevinParams,
    omega,
    convention: Convention = Convention.PAPER_LITERAL,
    *,
    appendix_pi: bool = False,
    offset=None,
) -> np.ndarray:
    """Raw array form of :func:`s_itn_analytic` for arbitrary (unsorted) points.

    With ``offset`` given, the points are ``2 omega_rot + offset`` and the
    factor ``w**2 - 4 omega_rot**2`` is formed as ``offset (4 omega_rot + offset)``,
    which keeps full relative precision right at the resonance.
    """
    if params.gamma <= 0:
        raise DomainError("the torsion-noise spectrum needs gamma > 0")
    convention = Convention(convention)
    if appendix_pi and convention is Convention.CALIBRATED:
        raise DomainError("appendix_pi applies only to the paper-literal normalization")
    g, o, a = params.gamma, params.omega_rot, params.amplitude_A
    o2 = o * o
    if offset is None:
        w = np.asarray(omega, dtype=float)
        w2 = w * w
        detune = w2 - 4 * o2
    else:
        d = np.asarray(offset, dtype=float)
        w = 2 * o + d
        w2 = w * w
        detune = d * (4 * o + d)
    num = 4 * w2 * w2 + 4 * (g * g - 3 * o2) * w2 + 16 * o2 * o2
    den = g * (w2 + g * g) * (4 * g * g * w2 + detune**2)
    values = a * a * num / den
    if convention is Convention.CALIBRATED:
        values = values * (CONVOLUTION_TO_ITN / math.pi)
    elif appendix_pi:
        values = values * math.pi
    return values


def s_itn_analytic(
    params: LangevinParams,
    omega_grid,
    convention: Convention = Convention.PAPER_LITERAL,
    *,
    appendix_pi: bool = False,
) -> Spectrum:
    """Spectrum of the squared angular velocity, 1/s^3.

    ``appendix_pi`` multiplies the printed closed form by ``pi``; it only makes
    sense for ``PAPER_LITERAL``.
    """
    w = _grid(omega_grid)
    values = itn_values(params, w, convention, appendix_pi=appendix_pi)
    return Spectrum(w, values, convention, quantity="theta_dot_squared")


def itn_from_velocity(velocity: Spectrum) -> Spectrum:
    """Fluctuation spectrum of ``theta_dot**2`` from the velocity spectrum (Isserlis).

    Only defined under the calibrated convention, where it is
    ``2 (S_v * S_v) / (2 pi)``.
    """
    if velocity.convention is not Convention.CALIBRATED:
        raise ConventionMismatchError("itn_from_velocity needs a calibrated velocity spectrum")
    conv = self_convolve(velocity)
    return replace(conv, values=conv.values / math.pi, quantity="theta_dot_squared")


def symmetric_grid(half_width: float, spacing: float) -> np.ndarray:
    """Uniform grid ``spacing * (-n .. n)`` with ``n = ceil(half_width / spacing)``."""
    if not (half_width > 0 and spacing > 0):
        raise DomainError("half_width and spacing must be positive")
    n = int(math.ceil(half_width / spacing))
    return spacing * np.arange(-n, n + 1, dtype=float)


def self_convolve(spectrum: Spectrum, tail_fraction: float = TAIL_FRACTION) -> Spectrum:
    """``(S * S)(w) = int S(u) S(w - u) du`` by the trapezoidal rule on the input grid.

    The grid must be uniform and symmetric about zero, and the spectrum at
    both edges must be below ``tail_fraction`` of its peak; otherwise
    :class:`TailCoverageError` is raised with an estimate of the missing
    contribution.
    """
    w, s = spectrum.omega, spectrum.values
    n = (len(w) - 1) // 2
    if len(w) < 3 or len(w) % 2 == 0:
        raise DomainError("self_convolve needs an odd number of grid points")
    du = (w[-1] - w[0]) / (len(w) - 1)
    if not np.allclose(np.diff(w), du, rtol=1e-9, atol=0) or abs(w[n]) > 1e-9 * du:
        raise DomainError("self_convolve needs a uniform grid symmetric about zero")
    peak = float(s.max())
    if peak == 0.0:
        return replace(spectrum, values=np.zeros_like(s))
    edge = max(s[0], s[-1])
    if edge > tail_fraction * peak:
        # A 1/w**2 tail beyond the edge carries about edge * width of area.
        raise TailCoverageError(
            f"spectrum at the grid edge is {edge / peak:.2e} of its peak (limit {tail_fraction:g})",
            truncation_bound=2.0 * edge * w[-1] * peak,
        )
    full = signal.fftconvolve(s, s)  # index j+k for s[j] s[k], output w = du * (m - 2n)
    conv = full[n : 3 * n + 1] * du
    # Trapezoid end corrections: the overlap range for output offset m has the
    # grid edge at one end and the mirrored edge at the other.
    m = np.arange(-n, n + 1)
    ends = np.where(m >= 0, s[np.abs(m)] * s[-1], s[2 * n - np.abs(m)] * s[0])
    conv = conv - du * ends
    return replace(spectrum, values=np.clip(conv, 0.0, None), quantity=spectrum.quantity + "*2")


def estimate_psd(
    trajectories: Sequence[NoiseTrajectory] | Iterable[NoiseTrajectory],
    segment_length: int,
    field: str = "theta",
) -> Spectrum:
    """Welch estimate (Hann window, 50% overlap) averaged over trajectories.

    Returned as a calibrated two-sided density in angular frequency, so
    ``integrate() / (2 pi)`` is the signal variance.  For
    ``field="theta_dot_squared"`` the time mean of each trajectory's
    ``theta_dot**2`` is removed first.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ConfigurationError("need at least one trajectory", key="trajectories")
    if segment_length < 8:
        raise ConfigurationError("segment_length must be at least 8 samples", key="segment_length")
    data = np.array([_field(t, field) for t in trajectories])
    if segment_length > data.shape[1]:
        raise ConfigurationError(
            f"segment_length {segment_length} exceeds trajectory length {data.shape[1]}",
            key="segment_length",
        )
    if field == "theta_dot_squared":
        data = data - data.mean(axis=1, keepdims=True)
    return _welch(data, trajectories[0].dt, segment_length, field)


def estimate_psd_arrays(data: np.ndarray, dt: float, segment_length: int, quantity: str = "") -> Spectrum:
    """As :func:`estimate_psd` for a raw ``(n_records, n_samples)`` array, no mean removal."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if segment_length < 8 or segment_length > data.shape[1]:
        raise ConfigurationError("segment_length must lie in [8, n_samples]", key="segment_length")
    return _welch(data, dt, segment_length, quantity)


def _welch(data: np.ndarray, dt: float, segment_length: int, quantity: str) -> Spectrum:
    f, p = signal.welch(
        data,
        fs=1.0 / dt,
        window="hann",
        nperseg=segment_length,
        noverlap=segment_length // 2,
        detrend=False,
        return_onesided=False,
        scaling="density",
        axis=-1,
    )
    p = p.mean(axis=0)
    order = np.argsort(f)
    return Spectrum(2 * math.pi * f[order], p[order], Convention.CALIBRATED, quantity=quantity)


def _field(traj: NoiseTrajectory, field: str) -> np.ndarray:
    if field == "theta":
        return traj.theta
    if field == "theta_dot":
        return traj.theta_dot
    if field == "theta_dot_squared":
        return traj.theta_dot**2
    raise ConfigurationError(f"unknown field {field!r}", key="field")


def peak_metrics(spectrum: Spectrum) -> PeakReport:
    """Peak position, height, FWHM and quality factor.

    Only non-negative frequencies are searched, since two-sided spectra are
    even.  The peak is refined by a parabola through the three top samples and
    the half-maximum crossings by linear interpolation.
    """
    keep = spectrum.omega >= 0
    w, s = spectrum.omega[keep], spectrum.values[keep]
    if len(w) < 3:
        raise InconclusivePeakError("too few non-negative frequencies")
    k = int(np.argmax(s))
    if k == 0 or k == len(w) - 1:
        raise InconclusivePeakError(f"maximum at grid edge (omega = {w[k]:.6g})")
    (x0, x1, x2), (y0, y1, y2) = w[k - 1 : k + 2], s[k - 1 : k + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
    c = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / denom
    if a < 0:
        peak_w = -b / (2 * a)
        peak_v = c - b * b / (4 * a)
    else:
        peak_w, peak_v = x1, y1
    half = 0.5 * peak_v
    below = np.nonzero(s[:k] < half)[0]
    above = np.nonzero(s[k:] < half)[0]
    if below.size == 0 or above.size == 0:
        raise InconclusivePeakError("half-maximum not reached inside the grid")
    i = below[-1]
    lo = w[i] + (half - s[i]) * (w[i + 1] - w[i]) / (s[i + 1] - s[i])
    j = k + above[0]
    hi = w[j - 1] + (half - s[j - 1]) * (w[j] - w[j - 1]) / (s[j] - s[j - 1])
    fwhm = hi - lo
    return PeakReport(float(peak_w), float(peak_v), float(fwhm), float(peak_w / fwhm))


def psd_poles(params: LangevinParams) -> PoleSet:
    """The four complex poles of the angle spectrum, ``+-sqrt(omega**2 - gamma**2/4) +- i gamma/2``."""
    radicand = params.omega_rot**2 - params.gamma**2 / 4
    half = params.gamma / 2
    if radicand >= 0:
        r = math.sqrt(radicand)
        poles = (complex(r, half), complex(-r, half), complex(r, -half), complex(-r, -half))
    else:
        r = math.sqrt(-radicand)
        poles = (
            complex(0, half + r),
            complex(0, half - r),
            complex(0, -half + r),
            complex(0, -half - r),
        )
    return PoleSet(poles)
