"""Ambient-gas collisions as a thermal source of torsion noise.

Free-molecular gas damping of a cubic box rotating about a vertical axis, and
the fluctuation-dissipation drive amplitude ``A = 2 gamma k_B T / I`` that goes
with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import K_B, N2_MASS, ROOM_TEMPERATURE
from .errors import DomainError


def _require_positive(**values):
    for name, value in values.items():
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class GasEnvironment:
    pressure: float  # Pa
    temperature: float = ROOM_TEMPERATURE  # K
    molecule_mass: float = N2_MASS  # kg

    def __post_init__(self):
        _require_positive(
            pressure=self.pressure,
            temperature=self.temperature,
            molecule_mass=self.molecule_mass,
        )


@dataclass(frozen=True)
class ThermalLangevinParams:
    gamma_rot: float  # 1/s
    amplitude_A: float  # 1/s^3
    omega_rot: float  # rad/s
    moment_of_inertia: float  # kg m^2
    temperature: float  # K

    @classmethod
    def from_environment(cls, env, box_side, inertia, omega_rot):
        gamma = gas_damping(env, box_side, inertia)
        return cls(
            gamma_rot=gamma,
            amplitude_A=thermal_amplitude(gamma, env.temperature, inertia),
            omega_rot=omega_rot,
            moment_of_inertia=inertia,
            temperature=env.temperature,
        )

    def langevin(self):
        from .langevin import LangevinParams

        return LangevinParams(self.omega_rot, self.gamma_rot, self.amplitude_A)


def gas_damping(env: GasEnvironment, box_side: float, inertia: float) -> float:
    """Rotational damping rate (1/s) from free-molecular gas drag on a cube."""
    _require_positive(box_side=box_side, inertia=inertia)
    return (
        box_side**4
        / inertia
        * (1.0 + math.pi / 12.0)
        * env.pressure
        * math.sqrt(2.0 * env.molecule_mass / (math.pi * K_B * env.temperature))
    )


def thermal_amplitude(gamma: float, temperature: float, inertia: float) -> float:
    """Fluctuation-dissipation noise amplitude ``A = 2 gamma k_B T / I`` (1/s^3).

    ``temperature = 0`` is accepted and gives no drive.
    """
    _require_positive(gamma=gamma, inertia=inertia)
    if temperature < 0 or not math.isfinite(temperature):
        raise DomainError(f"temperature must be non-negative, got {temperature!r}")
    return 2.0 * gamma * K_B * temperature / inertia


def pressure_rule_of_thumb(pressure: float) -> float:
    """Order-of-magnitude damping estimate, ``gamma ~ 1e-4 * P`` (P in Pa, gamma in 1/s).

    Only meant for quick regime checks; use :func:`gas_damping` for numbers.
    """
    return 1e-4 * pressure
