"""Dephasing of Stern-Gerlach matter-wave interferometers by inertial torsion noise.

Modules, bottom up:

``pendulum``        box and wire to torsion frequency
``environment``     gas damping and thermal drive amplitude
``langevin``        exact stochastic simulation of the box angle
``spectra``         analytic and estimated power spectra
``interferometer``  arm trajectories and the transfer function
``dephasing``       dephasing factor, spectral and Monte Carlo
``sweeps``          parameter scans, contours and amplitude bounds
``cli``             command-line front end
"""

__version__ = "0.1.0"
