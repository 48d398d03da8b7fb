"""Stern-Gerlach arm trajectories and the interferometer transfer function.

The transfer function is ``F(w) = |int (x_R(t)**2 - x_L(t)**2) exp(i w t) dt|**2``
(units m^4 s^2).  Three routes are provided:

* :func:`transfer_exact` -- the closed form for the five-segment loop below.
* :func:`transfer_numeric` -- the defining integral evaluated from the
  piecewise-polynomial trajectories with exact antiderivatives; used as an
  independent check on the closed form.
* :func:`transfer_approx` -- the plateau / ``w**-6`` step approximation.

The right arm accelerates at ``+a``, ``-a`` for ``t_a`` each, coasts at rest
at ``dx = a t_a**2`` for ``t_e``, then returns with ``-a``, ``+a``.  The left
arm stays at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.interpolate import PPoly

from .constants import BOHR_MAGNETON, LANDE_G
from .errors import DomainError

# Below |w| T = 1 the closed form cancels catastrophically; use its Taylor series.
SERIES_SWITCH = 1.0
_SERIES_TERMS = 24


@dataclass(frozen=True)
class InterferometerGeometry:
    particle_mass: float  # kg
    magnetic_gradient: float  # T/m
    t_accel: float  # s
    t_free: float = 0.0  # s
    lande_g: float = LANDE_G
    bohr_magneton: float = BOHR_MAGNETON  # J/T

    def __post_init__(self):
        if not (self.particle_mass > 0 and self.t_accel > 0):
            raise DomainError("particle_mass and t_accel must be positive")
        if not self.t_free >= 0:
            raise DomainError("t_free must be non-negative")

    @property
    def acceleration(self) -> float:
        """Magnetic acceleration of the deflected arm, m/s^2."""
        return self.lande_g * self.bohr_magneton * self.magnetic_gradient / self.particle_mass

    @property
    def delta_x(self) -> float:
        """Maximum arm separation, m."""
        return self.acceleration * self.t_accel**2

    @property
    def total_time(self) -> float:
        return 4.0 * self.t_accel + self.t_free


@dataclass(frozen=True)
class ArmTrajectories:
    x_left: PPoly
    x_right: PPoly
    total_time: float

    def path_difference(self) -> PPoly:
        """``x_R**2 - x_L**2`` as a piecewise polynomial on the shared breakpoints."""
        if not np.array_equal(self.x_left.x, self.x_right.x):
            raise DomainError("arm trajectories must share breakpoints")
        cols = []
        for j in range(self.x_right.c.shape[1]):
            r = self.x_right.c[::-1, j]
            l = self.x_left.c[::-1, j]
            cols.append(P.polysub(P.polymul(r, r), P.polymul(l, l)))
        order = max(len(c) for c in cols)
        c = np.zeros((order, len(cols)))
        for j, col in enumerate(cols):
            c[: len(col), j] = col
        return PPoly(c[::-1], self.x_right.x)


def build_trajectories(geom: InterferometerGeometry) -> ArmTrajectories:
    a, ta, te = geom.acceleration, geom.t_accel, geom.t_free
    dx = geom.delta_x
    # Local ascending coefficients (x0, v0, a/2) per segment.
    segments = [
        (ta, [0.0, 0.0, a / 2]),
        (ta, [a * ta**2 / 2, a * ta, -a / 2]),
        (te, [dx, 0.0, 0.0]),
        (ta, [dx, 0.0, -a / 2]),
        (ta, [a * ta**2 / 2, -a * ta, a / 2]),
    ]
    segments = [s for s in segments if s[0] > 0]
    x = np.concatenate([[0.0], np.cumsum([s[0] for s in segments])])
    x[-1] = geom.total_time
    c = np.array([s[1][::-1] for s in segments]).T
    right = PPoly(c, x)
    left = PPoly(np.zeros_like(c), x)
    return ArmTrajectories(left, right, geom.total_time)


def _bracket_series_coefficients(ta: float, te: float, n_terms: int = _SERIES_TERMS) -> np.ndarray:
    """Coefficients ``d_j`` with ``bracket(w) / w**5 = sum_j d_j w**(2 j)``.

    The bracket is odd in ``w`` and its ``w`` and ``w**3`` coefficients vanish
    identically, so the series starts at ``w**5``.
    """
    s1, s2, s3 = ta + te / 2, te / 2, 2 * ta + te / 2
    out = []
    for n in range(2, 2 + n_terms):
        sign = (-1) ** n
        c = 6 * ta * sign * s1 ** (2 * n) / math.factorial(2 * n)
        c += 3 * sign * (s2 ** (2 * n + 1) - s3 ** (2 * n + 1)) / math.factorial(2 * n + 1)
        c -= ta**2 * sign * (s2 ** (2 * n - 1) - s1 ** (2 * n - 1)) / math.factorial(2 * n - 1)
        out.append(c)
    return np.array(out)


def transfer_exact(geom: InterferometerGeometry, omega) -> np.ndarray:
    """Closed-form transfer function of the five-segment loop, m^4 s^2."""
    w = np.abs(np.asarray(omega, dtype=float))
    ta, te, a = geom.t_accel, geom.t_free, geom.acceleration
    ratio = np.empty_like(w)  # bracket / w**5
    small = w * geom.total_time < SERIES_SWITCH
    if np.any(small):
        d = _bracket_series_coefficients(ta, te)
        ratio[small] = np.polynomial.polynomial.polyval(w[small] ** 2, d)
    big = ~small
    if np.any(big):
        # Extended precision: near zeros of F the four terms cancel heavily.
        wb = w[big].astype(np.longdouble)
        ta, te = np.longdouble(ta), np.longdouble(te)
        bracket = (
            6 * wb * ta * np.cos(wb * (ta + te / 2))
            + (wb**2 * ta**2 + 3) * np.sin(wb * te / 2)
            - 3 * np.sin(wb * (2 * ta + te / 2))
            - wb**2 * ta**2 * np.sin(wb * (ta + te / 2))
        )
        ratio[big] = (bracket / wb**5).astype(float)
    return 16 * a**4 * ratio**2


def _exp_moments(omega: np.ndarray, h: float, kmax: int) -> np.ndarray:
    """``mu[k, j] = int_0^h s**k exp(i omega_j s) ds`` for k = 0..kmax."""
    w = np.asarray(omega, dtype=float)
    mu = np.empty((kmax + 1, w.size), dtype=complex)
    small = np.abs(w) * h < 2.0
    if np.any(small):
        iw = 1j * w[small]
        for k in range(kmax + 1):
            # sum_n (i w)^n h^(n+k+1) / (n! (n+k+1))
            term = np.full(iw.shape, h ** (k + 1), dtype=complex)
            acc = term / (k + 1)
            for n in range(1, 40):
                term = term * iw * h / n
                acc = acc + term / (n + k + 1)
            mu[k, small] = acc
    big = ~small
    if np.any(big):
        iw = 1j * w[big]
        e = np.exp(iw * h)
        m = (e - 1) / iw
        mu[0, big] = m
        for k in range(1, kmax + 1):
            m = (h**k * e - k * m) / iw
            mu[k, big] = m
    return mu


def _integral_by_moments(g: PPoly, w: np.ndarray) -> np.ndarray:
    coeffs = g.c[::-1]  # ascending powers in the local variable
    total = np.zeros(w.shape, dtype=complex)
    for j in range(coeffs.shape[1]):
        t0, t1 = g.x[j], g.x[j + 1]
        mu = _exp_moments(w, t1 - t0, coeffs.shape[0] - 1)
        total += np.exp(1j * w * t0) * (coeffs[:, j] @ mu)
    return total


def _integral_by_jumps(g: PPoly, w: np.ndarray) -> np.ndarray:
    """Integrate by parts until the polynomial runs out of derivatives.

    ``int g e^{iwt} = sum_k (-1)**k / (iw)**(k+1) * sum_j J_k(t_j) e^{iw t_j}``
    where ``J_k(t_j)`` is the jump ``g^(k)(t_j-) - g^(k)(t_j+)``, with ``g``
    taken as zero outside the support.  Jumps that vanish up to rounding
    (continuity of ``g`` and its first derivative) are set to zero, since the
    rounding residue would otherwise dominate at large ``w``.
    """
    order = g.c.shape[0] - 1
    x = g.x.astype(np.longdouble)
    n_seg = len(x) - 1
    # Phases and sums in extended precision; they cancel heavily near zeros of F.
    left = np.zeros((order + 1, n_seg + 1), dtype=np.longdouble)  # just left of x_j
    right = np.zeros((order + 1, n_seg + 1), dtype=np.longdouble)  # just right of x_j
    for k in range(order + 1):
        dk = g.derivative(k) if k else g
        for j in range(n_seg):
            c = dk.c[:, j].astype(np.longdouble)
            right[k, j] = c[-1]
            left[k, j + 1] = np.polyval(c, x[j + 1] - x[j])
    jumps = left - right
    scale = np.maximum(np.abs(left), np.abs(right)).max(axis=1, keepdims=True)
    jumps[np.abs(jumps) <= 1e-12 * scale] = 0.0
    iw = 1j * w.astype(np.clongdouble)
    phase = np.exp(np.outer(iw, x))
    total = np.zeros(w.shape, dtype=np.clongdouble)
    for k in range(order + 1):
        total += (-1) ** k * (phase @ jumps[k]) / iw ** (k + 1)
    return total.astype(complex)


# Above this |w| T the by-parts sum is used; below it the segment moments.
_BY_PARTS_SWITCH = 4.0


def transfer_numeric(traj: ArmTrajectories, omega) -> np.ndarray:
    """``|int_0^T (x_R**2 - x_L**2) exp(i w t) dt|**2`` from the piecewise trajectories.

    Works directly from the polynomial pieces, without the closed form: exact
    segment moments of ``s**k exp(i w s)`` at low frequency, and integration by
    parts over the breakpoint derivative jumps at high frequency.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    g = traj.path_difference()
    total = np.zeros(w.shape, dtype=complex)
    low = np.abs(w) * traj.total_time < _BY_PARTS_SWITCH
    if np.any(low):
        total[low] = _integral_by_moments(g, w[low])
    if np.any(~low):
        total[~low] = _integral_by_jumps(g, w[~low])
    out = np.abs(total) ** 2
    return out if np.ndim(omega) else out[0]


def transfer_approx(geom: InterferometerGeometry, omega) -> np.ndarray:
    """Step approximation: plateau ``dx**4 T**2`` up to ``2 pi / T``, then ``w**-6``.

    At ``w = 2 pi / T`` exactly the plateau value is returned.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise DomainError("transfer_approx expects non-negative frequencies")
    T = geom.total_time
    plateau = geom.delta_x**4 * T**2
    corner = 2 * math.pi / T
    with np.errstate(divide="ignore"):
        tail = plateau * (corner / w) ** 6
    return np.where(w <= corner, plateau, tail)


def plateau_limit(geom: InterferometerGeometry) -> float:
    """``F(0)``; equals ``(23/15)**2 a**4 t_a**10`` when there is no free flight."""
    d = _bracket_series_coefficients(geom.t_accel, geom.t_free, 1)
    return float(16 * geom.acceleration**4 * d[0] ** 2)
