"""Physical constants in SI units."""

from scipy import constants as _c

K_B = _c.k  # J/K, exact
HBAR = _c.hbar  # J s
ATOMIC_MASS = _c.atomic_mass  # kg

# The interferometer literature this package targets quotes the Bohr magneton
# rounded to three figures; keep that value as the default.
BOHR_MAGNETON = 9.27e-24  # J/T
LANDE_G = 2.0

N2_MASS = 28.0134 * ATOMIC_MASS  # kg
ROOM_TEMPERATURE = 300.0  # K
