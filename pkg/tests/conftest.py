import math

import pytest

from itnoise.interferometer import InterferometerGeometry
from itnoise.langevin import LangevinParams


@pytest.fixture
def geom():
    """Nanoparticle loop: 1e-15 kg, 1e4 T/m, t_a = 0.25 s, no free flight."""
    return InterferometerGeometry(particle_mass=1e-15, magnetic_gradient=1e4, t_accel=0.25)


@pytest.fixture
def geom_free():
    return InterferometerGeometry(particle_mass=1e-15, magnetic_gradient=1e4, t_accel=0.25, t_free=0.1)


@pytest.fixture
def benign():
    """Torsion at 1 Hz, weak damping, small drive."""
    return LangevinParams(omega_rot=2 * math.pi, gamma=1e-2, amplitude_A=1e-10)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects one PASS/FAIL line per acceptance check for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
