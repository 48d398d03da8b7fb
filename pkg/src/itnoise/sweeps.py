"""Parameter scans of the dephasing factor.

Each lattice point is an independent :func:`~itnoise.dephasing.gamma_spectral`
call.  Points are evaluated through :func:`parallel_map`, which returns results
in input order whatever the worker count, so a scan is reproducible row for
row.  A point whose quadrature fails keeps its row, with ``nan`` values and the
error message in the ``status`` column.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import contourpy
import numpy as np

from .constants import N2_MASS, ROOM_TEMPERATURE
from .conventions import Convention
from .dephasing import DEFAULT_RTOL, gamma_spectral
from .environment import GasEnvironment, gas_damping, thermal_amplitude
from .errors import ConfigurationError, DomainError, ITNError
from .interferometer import InterferometerGeometry
from .io import config_hash, write_csv, write_json
from .langevin import LangevinParams

# Relation between superposition size and torsion-noise amplitude quoted for a
# recent simulation of suspended interferometers, m / s^3.
DELTA_X_AMPLITUDE_PRODUCT = 1e-11
DEFAULT_A_BOUND = 1e-5  # 1/s^3, off-resonance bound at gamma > 1e-4
PEAK_REFINE_LEVELS = 3
CONTOUR_THRESHOLDS = (1e-6, 1e-2)


class SweptParameter(str, Enum):
    OMEGA_ROT = "omega_rot"
    GAMMA = "gamma"
    AMPLITUDE_A = "amplitude_A"
    PRESSURE = "pressure"
    TEMPERATURE = "temperature"


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    count: int
    spacing: str = "log"

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ConfigurationError("grid count must be a positive integer", key="count")
        if self.spacing not in ("log", "linear"):
            raise ConfigurationError(f"unknown spacing {self.spacing!r}", key="spacing")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi < self.lo:
            raise ConfigurationError("grid bounds must be finite with lo <= hi", key="lo")
        if self.spacing == "log" and self.lo <= 0:
            raise ConfigurationError("log grids need positive bounds", key="lo")
        if self.count > 1 and self.hi == self.lo:
            raise ConfigurationError("a grid with several points needs lo < hi", key="hi")

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([float(self.lo)])
        if self.spacing == "log":
            return np.geomspace(self.lo, self.hi, self.count)
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class FixedParams:
    """Everything a scan holds fixed; the swept field is overwritten per point."""

    geometry: InterferometerGeometry
    langevin: LangevinParams
    moment_of_inertia: float = 10.0  # kg m^2
    temperature: float = ROOM_TEMPERATURE  # K
    pressure: float = 1e2  # Pa
    box_side: float = 0.6  # m
    molecule_mass: float = N2_MASS  # kg
    total_time: float | None = None  # s; cutoff 2 pi / total_time
    convention: Convention = Convention.PAPER_LITERAL
    rtol: float = DEFAULT_RTOL


@dataclass(frozen=True)
class SweepSpec:
    swept_parameter: SweptParameter
    grid: GridSpec
    fixed: FixedParams
    threshold: float | None = None
    thermal: bool = False

    def describe(self) -> dict:
        return {
            "swept_parameter": SweptParameter(self.swept_parameter).value,
            "grid": vars(self.grid),
            "fixed": _describe_fixed(self.fixed),
            "threshold": self.threshold,
            "thermal": self.thermal,
        }


@dataclass
class SweepResult:
    columns: list[str]
    rows: list[list]
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float if name != "status" else object)

    @property
    def failed(self) -> list[int]:
        i = self.columns.index("status")
        return [k for k, r in enumerate(self.rows) if r[i] != "ok"]

    def write(self, csv_path, manifest_path=None, extra: dict | None = None) -> dict:
        checksum = write_csv(csv_path, self.columns, self.rows)
        manifest = dict(self.metadata)
        manifest["outputs"] = {str(csv_path): checksum}
        if extra:
            manifest.update(extra)
        if manifest_path is not None:
            write_json(manifest_path, manifest)
        return manifest


def _describe_fixed(fixed: FixedParams) -> dict:
    g, p = fixed.geometry, fixed.langevin
    return {
        "particle_mass_kg": g.particle_mass,
        "eta_T_per_m": g.magnetic_gradient,
        "t_a_s": g.t_accel,
        "t_e_s": g.t_free,
        "omega_rot_rad_per_s": p.omega_rot,
        "gamma_per_s": p.gamma,
        "A_per_s3": p.amplitude_A,
        "inertia_kg_m2": fixed.moment_of_inertia,
        "temperature_K": fixed.temperature,
        "pressure_Pa": fixed.pressure,
        "box_side_m": fixed.box_side,
        "molecule_mass_kg": fixed.molecule_mass,
        "total_time_s": fixed.total_time,
        "convention": Convention(fixed.convention).value,
        "rtol": fixed.rtol,
    }


def parallel_map(func: Callable, items: Sequence, threads: int = 1) -> list:
    """``[func(x) for x in items]``, optionally on a process pool; order is preserved."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * threads))))


def _point(task) -> tuple[float, float, str]:
    """Worker: ``(Gamma, error estimate, status)`` for one parameter set."""
    geom, params, fixed = task
    try:
        r = gamma_spectral(
            geom, params, fixed.total_time, convention=fixed.convention, rtol=fixed.rtol
        )
        return r.gamma_value, r.quadrature_error_estimate, "ok"
    except ITNError as exc:
        return math.nan, math.nan, f"error: {type(exc).__name__}: {exc}".replace("\n", " ")


def _metadata(spec_description: dict, started: float, seed: int = 0) -> dict:
    from . import __version__

    return {
        "config_hash": config_hash(spec_description),
        "code_version": __version__,
        "seed": seed,
        "wall_time_s": time.perf_counter() - started,
        "spec": spec_description,
    }


def _evaluate(fixed: FixedParams, params_list, threads) -> list[tuple[float, float, str]]:
    return parallel_map(_point, [(fixed.geometry, p, fixed) for p in params_list], threads)


def _interior_maxima(values: np.ndarray) -> list[int]:
    v = np.where(np.isfinite(values), values, -np.inf)
    return [i for i in range(1, len(v) - 1) if v[i] > v[i - 1] and v[i] >= v[i + 1]]


def _refine_peak(fixed, x, value, step, log, levels, threads):
    """Grid halving around a maximum; ``step`` is the current spacing (ratio if ``log``)."""
    for _ in range(levels):
        step = math.sqrt(step) if log else step / 2
        cands = [x / step, x * step] if log else [x - step, x + step]
        cands = [c for c in cands if c > 0]
        res = _evaluate(fixed, [fixed.langevin.with_(omega_rot=c) for c in cands], threads)
        for c, (g, _, status) in zip(cands, res):
            if status == "ok" and g > value:
                x, value = c, g
    return x, value, step


def sweep_gamma_vs_omega(
    spec: SweepSpec, *, refine_levels: int = PEAK_REFINE_LEVELS, threads: int = 1
) -> SweepResult:
    """Gamma against the torsion frequency, with local maxima refined and annotated."""
    started = time.perf_counter()
    fixed = spec.fixed
    omegas = spec.grid.values()
    res = _evaluate(fixed, [fixed.langevin.with_(omega_rot=w) for w in omegas], threads)
    gam = np.array([r[0] for r in res])
    peaks = []
    log = spec.grid.spacing == "log"
    if len(omegas) > 1:
        step0 = omegas[1] / omegas[0] if log else omegas[1] - omegas[0]
        loop_time = fixed.total_time or fixed.geometry.total_time
        for i in _interior_maxima(gam):
            x, v, step = _refine_peak(fixed, omegas[i], gam[i], step0, log, refine_levels, threads)
            peaks.append(
                {
                    "omega_rot_rad_per_s": x,
                    "f_rot_Hz": x / (2 * math.pi),
                    "Gamma": v,
                    "refined_step": step,
                    "step_kind": "ratio" if log else "absolute",
                    "grid_index": i,
                    "harmonic_index": x * loop_time / (2 * math.pi),
                }
            )
    rows = [
        [w, w / (2 * math.pi), g, e, s] for w, (g, e, s) in zip(omegas, res)
    ]
    meta = _metadata(spec.describe(), started)
    meta["peaks"] = sorted(peaks, key=lambda p: -p["Gamma"])
    return SweepResult(["omega_rot_rad_per_s", "f_rot_Hz", "Gamma", "quad_error", "status"], rows, meta)


def _thermal_params(fixed: FixedParams, gamma: float, temperature: float | None = None) -> LangevinParams:
    t = fixed.temperature if temperature is None else temperature
    return fixed.langevin.with_(gamma=gamma, amplitude_A=thermal_amplitude(gamma, t, fixed.moment_of_inertia))


def sweep_gamma_vs_damping(spec: SweepSpec, thermal: bool | None = None, *, threads: int = 1) -> SweepResult:
    """Gamma against the damping rate; in thermal mode ``A = 2 gamma k_B T / I`` per point."""
    started = time.perf_counter()
    thermal = spec.thermal if thermal is None else thermal
    fixed = spec.fixed
    gammas = spec.grid.values()
    if thermal:
        plist = [_thermal_params(fixed, g) for g in gammas]
    else:
        plist = [fixed.langevin.with_(gamma=g) for g in gammas]
    res = _evaluate(fixed, plist, threads)
    rows = [[p.omega_rot, p.gamma, p.amplitude_A, g, e, s] for p, (g, e, s) in zip(plist, res)]
    desc = spec.describe()
    desc["thermal"] = thermal
    meta = _metadata(desc, started)
    return SweepResult(
        ["omega_rot_rad_per_s", "gamma_per_s", "A_per_s3", "Gamma", "quad_error", "status"], rows, meta
    )


def sweep_gas(spec: SweepSpec, *, threads: int = 1) -> SweepResult:
    """Gamma against gas pressure or temperature through the collision-damping chain."""
    started = time.perf_counter()
    fixed = spec.fixed
    kind = SweptParameter(spec.swept_parameter)
    if kind not in (SweptParameter.PRESSURE, SweptParameter.TEMPERATURE):
        raise ConfigurationError("sweep_gas scans pressure or temperature", key="swept_parameter")
    plist, envs = [], []
    for x in spec.grid.values():
        p, t = (x, fixed.temperature) if kind is SweptParameter.PRESSURE else (fixed.pressure, x)
        env = GasEnvironment(p, t, fixed.molecule_mass)
        g = gas_damping(env, fixed.box_side, fixed.moment_of_inertia)
        envs.append(env)
        plist.append(_thermal_params(fixed, g, t))
    res = _evaluate(fixed, plist, threads)
    rows = [
        [e.pressure, e.temperature, p.gamma, p.amplitude_A, g, err, s]
        for e, p, (g, err, s) in zip(envs, plist, res)
    ]
    meta = _metadata(spec.describe(), started)
    return SweepResult(
        ["pressure_Pa", "temperature_K", "gamma_per_s", "A_per_s3", "Gamma", "quad_error", "status"],
        rows,
        meta,
    )


def sweep_amplitude(spec: SweepSpec, *, threads: int = 1) -> SweepResult:
    started = time.perf_counter()
    fixed = spec.fixed
    amps = spec.grid.values()
    res = _evaluate(fixed, [fixed.langevin.with_(amplitude_A=a) for a in amps], threads)
    rows = [[a, g, e, s] for a, (g, e, s) in zip(amps, res)]
    return SweepResult(["A_per_s3", "Gamma", "quad_error", "status"], rows, _metadata(spec.describe(), started))


def contour_lines(x: np.ndarray, y: np.ndarray, z: np.ndarray, level: float) -> list[np.ndarray]:
    """Iso-lines of ``z`` (shape ``(len(y), len(x))``) at ``level`` on a log-log lattice.

    Marching squares with linear interpolation in ``log10`` of all three
    quantities; returns ``(n, 2)`` arrays of ``(x, y)`` points.
    """
    if len(x) < 2 or len(y) < 2:
        return []
    with np.errstate(divide="ignore", invalid="ignore"):
        lz = np.log10(z)
    mask = ~np.isfinite(lz)
    gen = contourpy.contour_generator(
        np.log10(x), np.log10(y), np.ma.array(lz, mask=mask), line_type="Separate"
    )
    return [10.0**line for line in gen.lines(math.log10(level))]


def sweep_gamma_grid(spec_A: SweepSpec, spec_gamma: SweepSpec, *, threads: int = 1) -> SweepResult:
    """Gamma on the (A, gamma) lattice with iso-contours at the standard thresholds.

    Gamma is exactly quadratic in A, so one quadrature per damping value is
    rescaled along the A axis.
    """
    started = time.perf_counter()
    fixed = spec_gamma.fixed
    amps = spec_A.grid.values()
    gammas = spec_gamma.grid.values()
    res = _evaluate(fixed, [fixed.langevin.with_(gamma=g, amplitude_A=1.0) for g in gammas], threads)
    gam = np.array([[r[0] * a * a for r in res] for a in amps])  # (len(A), len(gamma))
    rows = []
    for i, a in enumerate(amps):
        for j, g in enumerate(gammas):
            rows.append([a, g, gam[i, j], res[j][1] * a * a, res[j][2]])
    levels = sorted(set(CONTOUR_THRESHOLDS) | ({spec_gamma.threshold} if spec_gamma.threshold else set()))
    contours = {}
    for level in levels:
        contours[f"{level:g}"] = [line.tolist() for line in contour_lines(gammas, amps, gam, level)]
    desc = {"A": spec_A.describe(), "gamma": spec_gamma.describe()}
    meta = _metadata(desc, started)
    meta["contours"] = contours
    return SweepResult(["A_per_s3", "gamma_per_s", "Gamma", "quad_error", "status"], rows, meta)


def amplitude_bound(
    omega_grid,
    gamma_grid,
    threshold: float,
    fixed: FixedParams,
    *,
    threads: int = 1,
) -> SweepResult:
    """Largest noise amplitude keeping Gamma below ``threshold`` at each (omega, gamma).

    Uses the exact quadratic dependence on A: ``A_bound = sqrt(threshold / Gamma(A=1))``.
    """
    if not threshold > 0:
        raise DomainError("threshold must be positive")
    started = time.perf_counter()
    omegas = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    gammas = np.atleast_1d(np.asarray(gamma_grid, dtype=float))
    plist = [
        fixed.langevin.with_(omega_rot=w, gamma=g, amplitude_A=1.0) for w in omegas for g in gammas
    ]
    res = _evaluate(fixed, plist, threads)
    rows = []
    for p, (g1, err, status) in zip(plist, res):
        bound = math.sqrt(threshold / g1) if status == "ok" and g1 > 0 else math.nan
        rows.append([p.omega_rot, p.omega_rot / (2 * math.pi), p.gamma, g1, bound, status])
    desc = {
        "omega_grid": omegas.tolist(),
        "gamma_grid": gammas.tolist(),
        "threshold": threshold,
        "fixed": _describe_fixed(fixed),
    }
    return SweepResult(
        ["omega_rot_rad_per_s", "f_rot_Hz", "gamma_per_s", "Gamma_at_unit_A", "A_bound_per_s3", "status"],
        rows,
        _metadata(desc, started),
    )


def feasibility_check(delta_x: float, a_bound: float = DEFAULT_A_BOUND) -> tuple[float, bool]:
    """Noise amplitude implied by the superposition size, and whether it is below ``a_bound``."""
    if not delta_x > 0:
        raise DomainError("delta_x must be positive")
    required = DELTA_X_AMPLITUDE_PRODUCT / delta_x
    return required, bool(required < a_bound)


def run_sweep(spec: SweepSpec, *, threads: int = 1) -> SweepResult:
    """Dispatch on the swept parameter."""
    kind = SweptParameter(spec.swept_parameter)
    if kind is SweptParameter.OMEGA_ROT:
        return sweep_gamma_vs_omega(spec, threads=threads)
    if kind is SweptParameter.GAMMA:
        return sweep_gamma_vs_damping(spec, threads=threads)
    if kind is SweptParameter.AMPLITUDE_A:
        return sweep_amplitude(spec, threads=threads)
    return sweep_gas(spec, threads=threads)


def with_fixed(spec: SweepSpec, **changes) -> SweepSpec:
    return replace(spec, fixed=replace(spec.fixed, **changes))
