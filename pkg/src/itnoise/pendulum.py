"""Torsion-pendulum parameters of a box hanging from a thin wire.

All frequencies are angular (rad/s).  The wire's torsion constant is

    kappa = pi * G * d**4 / (32 * l)

and the intrinsic frequency is ``sqrt(kappa / I)``.  Some published statements
of this formula put an extra square root on ``kappa`` itself; that reading does
not reproduce the worked example (d = 5 mm, l = 5 m, steel, I = 1.8 kg m^2
gives 0.735 rad/s), so it is not used here.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import DomainError


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class SuspensionWire:
    diameter: float  # m
    length: float  # m
    shear_modulus: float  # Pa

    def __post_init__(self):
        _require_positive(
            diameter=self.diameter, length=self.length, shear_modulus=self.shear_modulus
        )
        if self.diameter > self.length / 10:
            warnings.warn(
                f"wire diameter {self.diameter} m is not small compared to its "
                f"length {self.length} m; thin-wire torsion formula may not apply",
                stacklevel=2,
            )


@dataclass(frozen=True)
class ExperimentBox:
    side_length: float  # m
    mass: float  # kg
    moment_of_inertia: float  # kg m^2

    @classmethod
    def cube(cls, mass: float, side_length: float) -> "ExperimentBox":
        return cls(side_length, mass, box_inertia(mass, side_length))

    def __post_init__(self):
        _require_positive(mass=self.mass, moment_of_inertia=self.moment_of_inertia)


@dataclass(frozen=True)
class TorsionOscillator:
    omega_rot: float  # rad/s
    torsion_constant: float  # N m / rad
    moment_of_inertia: float  # kg m^2


def torsion_constant(wire: SuspensionWire) -> float:
    """Torsion constant of a round wire, N m / rad."""
    return math.pi * wire.shear_modulus * wire.diameter**4 / (32.0 * wire.length)


def box_inertia(mass: float, side: float) -> float:
    """Moment of inertia of a solid cube about an axis through opposite faces."""
    _require_positive(mass=mass)
    if side < 0 or not math.isfinite(side):
        raise DomainError(f"side must be non-negative and finite, got {side!r}")
    if side == 0:
        warnings.warn("zero box side length gives a degenerate moment of inertia", stacklevel=2)
    return mass * side**2 / 6.0


def intrinsic_frequency(wire: SuspensionWire, inertia: float) -> TorsionOscillator:
    _require_positive(inertia=inertia)
    kappa = torsion_constant(wire)
    return TorsionOscillator(
        omega_rot=math.sqrt(kappa / inertia),
        torsion_constant=kappa,
        moment_of_inertia=inertia,
    )
