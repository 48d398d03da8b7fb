"""Run configuration: YAML files with unit-suffixed keys.

Every physical quantity is named with its unit (``t_a_s``, ``eta_T_per_m``,
``pressure_Pa`` ...).  Unknown keys are rejected with the full key path, so a
typo or a wrong unit suffix fails loudly instead of being ignored.

Blocks
------
``interferometer``  (required) particle_mass_kg, eta_T_per_m, t_a_s, t_e_s,
                    lande_g, bohr_magneton_J_per_T
``suspension``      wire_diameter_m, wire_length_m, shear_modulus_Pa,
                    box_mass_kg, box_side_m, inertia_kg_m2
``langevin``        omega_rot_rad_per_s or f_rot_Hz, gamma_per_s, A_per_s3
``environment``     pressure_Pa, temperature_K, molecule_mass_kg,
                    omega_rot_rad_per_s or f_rot_Hz
``simulation``      dt_s, duration_s, n_trajectories, master_seed,
                    segment_length, block_size
``dephasing``       method, convention, application, threshold, total_time_s,
                    omega_min_rad_per_s, rtol
``transfer``        f_min_Hz, f_max_Hz, n_points, spacing
``psd``             f_min_Hz, f_max_Hz, n_points, spacing
``sweep``           kind, thermal, threshold, refine_levels, branch list
                    ``omega_rot_branches_rad_per_s`` and one grid block per
                    swept quantity (``omega_rot_rad_per_s``, ``gamma_per_s``,
                    ``A_per_s3``, ``pressure_Pa``, ``temperature_K``), each
                    with lo, hi, count, spacing
``output``          directory, formats

Exactly one of ``langevin`` and ``environment`` supplies the noise model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .constants import BOHR_MAGNETON, LANDE_G, N2_MASS, ROOM_TEMPERATURE
from .conventions import Convention
from .environment import GasEnvironment, gas_damping, thermal_amplitude
from .errors import ConfigurationError, ITNError
from .interferometer import InterferometerGeometry
from .langevin import LangevinParams
from .pendulum import SuspensionWire, box_inertia, intrinsic_frequency

PRESETS = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "qgem", "gas")

_SCHEMA = {
    "interferometer": {
        "particle_mass_kg": float,
        "eta_T_per_m": float,
        "t_a_s": float,
        "t_e_s": float,
        "lande_g": float,
        "bohr_magneton_J_per_T": float,
    },
    "suspension": {
        "wire_diameter_m": float,
        "wire_length_m": float,
        "shear_modulus_Pa": float,
        "box_mass_kg": float,
        "box_side_m": float,
        "inertia_kg_m2": float,
    },
    "langevin": {
        "omega_rot_rad_per_s": float,
        "f_rot_Hz": float,
        "gamma_per_s": float,
        "A_per_s3": float,
    },
    "environment": {
        "pressure_Pa": float,
        "temperature_K": float,
        "molecule_mass_kg": float,
        "omega_rot_rad_per_s": float,
        "f_rot_Hz": float,
    },
    "simulation": {
        "dt_s": float,
        "duration_s": float,
        "n_trajectories": int,
        "master_seed": int,
        "segment_length": int,
        "block_size": int,
    },
    "dephasing": {
        "method": str,
        "convention": str,
        "application": str,
        "threshold": float,
        "total_time_s": float,
        "omega_min_rad_per_s": float,
        "rtol": float,
    },
    "transfer": {"f_min_Hz": float, "f_max_Hz": float, "n_points": int, "spacing": str},
    "psd": {"f_min_Hz": float, "f_max_Hz": float, "n_points": int, "spacing": str},
    "sweep": {
        "kind": str,
        "thermal": bool,
        "threshold": float,
        "refine_levels": int,
        "omega_rot_branches_rad_per_s": list,
        "omega_rot_rad_per_s": dict,
        "gamma_per_s": dict,
        "A_per_s3": dict,
        "pressure_Pa": dict,
        "temperature_K": dict,
    },
    "output": {"directory": str, "formats": list},
}
_GRID_KEYS = {"lo": float, "hi": float, "count": int, "spacing": str}
SWEEP_KINDS = ("omega_rot", "gamma", "amplitude_A", "pressure", "temperature", "grid", "amplitude_bound")
METHODS = ("spectral", "mc", "both")


@dataclass(frozen=True)
class SimulationConfig:
    dt_s: float = 1e-3
    duration_s: float = 1.0
    n_trajectories: int = 1000
    master_seed: int = 0
    segment_length: int = 1024
    block_size: int = 1024


@dataclass(frozen=True)
class DephasingConfig:
    method: str = "spectral"
    convention: Convention = Convention.PAPER_LITERAL
    application: str = "qgem"
    threshold: float | None = None
    total_time_s: float | None = None
    omega_min_rad_per_s: float | None = None
    rtol: float = 1e-4


@dataclass(frozen=True)
class FrequencyGrid:
    f_min_Hz: float = 1e-2
    f_max_Hz: float = 1e3
    n_points: int = 501
    spacing: str = "log"


@dataclass(frozen=True)
class RunConfig:
    raw: dict  # normalised block -> key -> value mapping, re-parseable
    geometry: InterferometerGeometry
    langevin: LangevinParams | None
    environment: GasEnvironment | None
    wire: SuspensionWire | None
    inertia_kg_m2: float | None
    box_side_m: float | None
    simulation: SimulationConfig
    dephasing: DephasingConfig
    transfer: FrequencyGrid
    psd: FrequencyGrid
    sweep: dict = field(default_factory=dict)
    output_directory: str = "out"
    output_formats: tuple = ("csv", "json")

    def noise_params(self) -> LangevinParams:
        if self.langevin is None:
            raise ConfigurationError("no langevin or environment block", key="langevin")
        return self.langevin

    def to_dict(self) -> dict:
        return _copy(self.raw)


def _copy(d):
    return {k: (dict(v) if isinstance(v, dict) else v) for k, v in d.items()}


def _coerce(value, kind, key):
    if kind is float:
        if isinstance(value, bool):
            raise ConfigurationError(f"expected a number, got {value!r}", key=key)
        try:
            out = float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"expected a number, got {value!r}", key=key) from None
        if not math.isfinite(out):
            raise ConfigurationError(f"expected a finite number, got {value!r}", key=key)
        return out
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigurationError(f"expected an integer, got {value!r}", key=key)
        return int(value)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"expected true/false, got {value!r}", key=key)
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"expected a string, got {value!r}", key=key)
        return value
    if kind is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"expected a list, got {value!r}", key=key)
        return list(value)
    if kind is dict:
        if not isinstance(value, dict):
            raise ConfigurationError(f"expected a mapping, got {value!r}", key=key)
        return dict(value)
    raise AssertionError(kind)


def _normalise(data) -> dict:
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a mapping of blocks", key="<root>")
    out = {}
    for block, body in data.items():
        if block not in _SCHEMA:
            raise ConfigurationError("unknown configuration block", key=str(block))
        if body is None:
            body = {}
        if not isinstance(body, dict):
            raise ConfigurationError("block must be a mapping", key=block)
        clean = {}
        for key, value in body.items():
            path = f"{block}.{key}"
            if key not in _SCHEMA[block]:
                raise ConfigurationError("unknown key (check the name and unit suffix)", key=path)
            v = _coerce(value, _SCHEMA[block][key], path)
            if block == "sweep" and isinstance(v, dict):
                v = _normalise_grid(v, path)
            if block == "sweep" and key == "omega_rot_branches_rad_per_s":
                v = [_coerce(x, float, path) for x in v]
            clean[key] = v
        out[block] = clean
    return out


def _normalise_grid(body: dict, path: str) -> dict:
    clean = {}
    for key, value in body.items():
        if key not in _GRID_KEYS:
            raise ConfigurationError("unknown grid key", key=f"{path}.{key}")
        clean[key] = _coerce(value, _GRID_KEYS[key], f"{path}.{key}")
    for required in ("lo", "hi", "count"):
        if required not in clean:
            raise ConfigurationError("missing grid key", key=f"{path}.{required}")
    clean.setdefault("spacing", "log")
    if clean["count"] < 1:
        raise ConfigurationError("grid must contain at least one point", key=f"{path}.count")
    return clean


def _require(block: dict, key: str, path: str):
    if key not in block:
        raise ConfigurationError("missing required key", key=f"{path}.{key}")
    return block[key]


def _omega(block: dict, path: str) -> float | None:
    if "omega_rot_rad_per_s" in block and "f_rot_Hz" in block:
        raise ConfigurationError("give omega_rot_rad_per_s or f_rot_Hz, not both", key=path)
    if "omega_rot_rad_per_s" in block:
        return block["omega_rot_rad_per_s"]
    if "f_rot_Hz" in block:
        return 2 * math.pi * block["f_rot_Hz"]
    return None


def parse_config(data: dict) -> RunConfig:
    """Validate a configuration mapping and resolve derived parameters."""
    raw = _normalise(data)
    try:
        return _build(raw)
    except ConfigurationError:
        raise
    except ITNError as exc:
        raise ConfigurationError(str(exc), key="<resolved>") from exc


def _build(raw: dict) -> RunConfig:
    ib = raw.get("interferometer")
    if ib is None:
        raise ConfigurationError("missing required block", key="interferometer")
    geometry = InterferometerGeometry(
        particle_mass=_require(ib, "particle_mass_kg", "interferometer"),
        magnetic_gradient=_require(ib, "eta_T_per_m", "interferometer"),
        t_accel=_require(ib, "t_a_s", "interferometer"),
        t_free=ib.get("t_e_s", 0.0),
        lande_g=ib.get("lande_g", LANDE_G),
        bohr_magneton=ib.get("bohr_magneton_J_per_T", BOHR_MAGNETON),
    )

    sb = raw.get("suspension", {})
    wire = None
    if any(k.startswith("wire_") or k == "shear_modulus_Pa" for k in sb):
        wire = SuspensionWire(
            _require(sb, "wire_diameter_m", "suspension"),
            _require(sb, "wire_length_m", "suspension"),
            _require(sb, "shear_modulus_Pa", "suspension"),
        )
    inertia = sb.get("inertia_kg_m2")
    if inertia is None and "box_mass_kg" in sb:
        inertia = box_inertia(sb["box_mass_kg"], _require(sb, "box_side_m", "suspension"))
    box_side = sb.get("box_side_m")

    has_lv, has_env = "langevin" in raw, "environment" in raw
    if has_lv and has_env:
        raise ConfigurationError("give either a langevin or an environment block, not both", key="environment")
    langevin = environment = None
    if has_lv or has_env:
        block_name = "langevin" if has_lv else "environment"
        block = raw[block_name]
        omega = _omega(block, block_name)
        if omega is None and wire is not None:
            if inertia is None:
                raise ConfigurationError("the wire needs inertia_kg_m2 or box_mass_kg", key="suspension")
            omega = intrinsic_frequency(wire, inertia).omega_rot
        if omega is None:
            raise ConfigurationError("missing torsion frequency", key=f"{block_name}.omega_rot_rad_per_s")
        if has_lv:
            langevin = LangevinParams(
                omega,
                _require(block, "gamma_per_s", "langevin"),
                _require(block, "A_per_s3", "langevin"),
            )
        else:
            environment = GasEnvironment(
                _require(block, "pressure_Pa", "environment"),
                block.get("temperature_K", ROOM_TEMPERATURE),
                block.get("molecule_mass_kg", N2_MASS),
            )
            if inertia is None or box_side is None:
                raise ConfigurationError(
                    "gas damping needs suspension.box_side_m and an inertia", key="suspension"
                )
            gamma = gas_damping(environment, box_side, inertia)
            langevin = LangevinParams(omega, gamma, thermal_amplitude(gamma, environment.temperature, inertia))

    sim = SimulationConfig(**raw.get("simulation", {}))
    if sim.n_trajectories < 1:
        raise ConfigurationError("must be at least 1", key="simulation.n_trajectories")
    if not 0 <= sim.master_seed < 2**64:
        raise ConfigurationError("must fit in an unsigned 64-bit integer", key="simulation.master_seed")
    if not (sim.dt_s > 0 and sim.duration_s > 0):
        raise ConfigurationError("dt_s and duration_s must be positive", key="simulation")

    db = dict(raw.get("dephasing", {}))
    if "method" in db and db["method"] not in METHODS:
        raise ConfigurationError(f"must be one of {METHODS}", key="dephasing.method")
    if "convention" in db:
        try:
            db["convention"] = Convention(db["convention"])
        except ValueError:
            raise ConfigurationError("must be 'paper' or 'calibrated'", key="dephasing.convention") from None
    if db.get("application", "qgem") not in ("qgem", "gravimeter", "custom"):
        raise ConfigurationError("must be qgem, gravimeter or custom", key="dephasing.application")
    deph = DephasingConfig(**db)

    grids = {}
    for name in ("transfer", "psd"):
        g = FrequencyGrid(**raw.get(name, {}))
        if not (0 < g.f_min_Hz <= g.f_max_Hz) or g.n_points < 1 or g.spacing not in ("log", "linear"):
            raise ConfigurationError("need 0 < f_min_Hz <= f_max_Hz, n_points >= 1, spacing log|linear", key=name)
        grids[name] = g

    sweep = raw.get("sweep", {})
    if sweep and sweep.get("kind") not in SWEEP_KINDS:
        raise ConfigurationError(f"must be one of {SWEEP_KINDS}", key="sweep.kind")

    ob = raw.get("output", {})
    return RunConfig(
        raw=raw,
        geometry=geometry,
        langevin=langevin,
        environment=environment,
        wire=wire,
        inertia_kg_m2=inertia,
        box_side_m=box_side,
        simulation=sim,
        dephasing=deph,
        transfer=grids["transfer"],
        psd=grids["psd"],
        sweep=sweep,
        output_directory=ob.get("directory", "out"),
        output_formats=tuple(ob.get("formats", ("csv", "json"))),
    )


def load_yaml(text: str, source: str = "<string>") -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {source}: {exc}", key="<file>") from None
    return data if data is not None else {}


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}", key="<file>") from None
    return parse_config(load_yaml(text, str(path)))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}", key="--preset")
    return resources.files("itnoise.presets").joinpath(f"{name}.yaml").read_text()


def load_preset(name: str) -> dict:
    return load_yaml(preset_text(name), f"preset {name}")


def merge(base: dict, override: dict) -> dict:
    """Block-wise merge: keys of ``override`` replace those of ``base``."""
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for block, body in override.items():
        if isinstance(body, dict) and isinstance(out.get(block), dict):
            out[block].update(body)
        else:
            out[block] = body
    if "environment" in override and "langevin" not in override:
        out.pop("langevin", None)
    if "langevin" in override and "environment" not in override:
        out.pop("environment", None)
    return out
