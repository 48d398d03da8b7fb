"""Command-line front end.

Every subcommand reads one YAML configuration (``--config``, ``--preset`` or
both; the file's keys override the preset's), writes its data files into the
output directory and finishes with ``manifest.json``.  The manifest is written
last, so its presence marks a completed run.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure
(quadrature did not converge, too few Monte Carlo samples, a sweep point that
failed).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import METHODS, PRESETS, RunConfig, load_preset, load_yaml, merge, parse_config
from .conventions import Convention, Sidedness
from .dephasing import (
    Application,
    DEFAULT_THRESHOLDS,
    Method,
    gamma_montecarlo,
    gamma_spectral,
    verdict,
)
from .environment import gas_damping, pressure_rule_of_thumb, thermal_amplitude
from .errors import (
    ConfigurationError,
    ConvergenceError,
    InconclusivePeakError,
    InsufficientSamplesError,
    ITNError,
    TailCoverageError,
)
from .interferometer import build_trajectories, plateau_limit, transfer_approx, transfer_exact, transfer_numeric
from .io import config_hash, write_columns, write_csv, write_json
from .langevin import SimulationGrid, iter_blocks
from .pendulum import intrinsic_frequency, torsion_constant
from .spectra import estimate_psd_arrays, peak_metrics, s_itn_analytic, s_theta_analytic
from .sweeps import (
    FixedParams,
    GridSpec,
    SweepResult,
    SweepSpec,
    SweptParameter,
    amplitude_bound,
    run_sweep,
    sweep_gamma_grid,
    sweep_gamma_vs_omega,
    with_fixed,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
MANIFEST = "manifest.json"
TRAJECTORY_HEADER = ["t", "theta", "theta_dot"]
SPECTRUM_HEADER = ["omega_rad_per_s", "value", "convention", "sidedness"]
_NUMERICAL_ERRORS = (ConvergenceError, InsufficientSamplesError, TailCoverageError)


class OutputCollision(ConfigurationError):
    pass


class _SweepPointsFailed(Exception):
    pass


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--preset", choices=PRESETS, help="built-in configuration")
    common.add_argument("--out", type=Path, help="output directory (default: output.directory or ./out)")
    common.add_argument("--seed", type=_u64, help="master seed, unsigned 64-bit (default 0)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker cap")
    common.add_argument("--method", choices=METHODS, help="dephasing estimator")
    common.add_argument("--convention", choices=[c.value for c in Convention], help="spectral normalization")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")

    parser = argparse.ArgumentParser(
        prog="itnoise", description="Torsion-noise dephasing of a suspended matter-wave interferometer."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate box motion and estimate its angle PSD")
    sub.add_parser("psd", parents=[common], help="analytic angle and torsion-noise spectra")
    sub.add_parser("transfer", parents=[common], help="interferometer transfer function F(omega)")
    sub.add_parser("dephasing", parents=[common], help="dephasing factor and threshold verdict")
    sp = sub.add_parser("sweep", parents=[common], help="parameter scan of the dephasing factor")
    sp.add_argument("spec", nargs="?", type=Path, help="YAML file whose blocks override the configuration")
    sub.add_parser("gas", parents=[common], help="damping and dephasing from residual gas")
    return parser


def _read_yaml(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}", key="<file>") from None
    data = load_yaml(text, str(path))
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a mapping of blocks", key=str(path))
    return data


def assemble_config(args) -> tuple[RunConfig, int]:
    """Merge preset, config file, sweep file and flags; return the config and the seed."""
    if args.preset is None and args.config is None:
        raise ConfigurationError("give --config or --preset", key="--config")
    data: dict = load_preset(args.preset) if args.preset else {}
    if args.config is not None:
        data = merge(data, _read_yaml(args.config))
    if getattr(args, "spec", None) is not None:
        data = merge(data, _read_yaml(args.spec))
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    sim = data.setdefault("simulation", {}) or {}
    data["simulation"] = sim
    if args.seed is not None:
        sim["master_seed"] = args.seed
    sim.setdefault("master_seed", 0)
    deph = data.get("dephasing") or {}
    if args.method is not None:
        deph["method"] = args.method
    if args.convention is not None:
        deph["convention"] = args.convention
    if deph:
        data["dephasing"] = deph
    cfg = parse_config(data)
    return cfg, cfg.simulation.master_seed


class Run:
    """Output bookkeeping for one command: collision check, checksums, manifest."""

    def __init__(self, command: str, cfg: RunConfig, seed: int, out: Path, force: bool):
        self.command, self.cfg, self.seed, self.out, self.force = command, cfg, seed, out, force
        self.outputs: dict[str, str] = {}
        self.extra: dict = {}
        self.started = datetime.now(timezone.utc)
        self._t0 = time.perf_counter()

    def claim(self, *names: str) -> None:
        if self.force:
            return
        taken = [n for n in (*names, MANIFEST) if (self.out / n).exists()]
        if taken:
            raise OutputCollision(
                f"{', '.join(taken)} already exist in {self.out}; use --force to overwrite", key="--out"
            )

    def csv(self, name: str, header, rows) -> None:
        self.outputs[name] = write_csv(self.out / name, header, rows)

    def columns(self, name: str, columns: dict) -> None:
        self.outputs[name] = write_columns(self.out / name, columns)

    def json(self, name: str, payload) -> None:
        self.outputs[name] = write_json(self.out / name, payload)

    def finish(self) -> Path:
        raw = self.cfg.to_dict()
        manifest = {
            "command": self.command,
            "code_version": __version__,
            "config": raw,
            "config_hash": config_hash(raw),
            "seed": self.seed,
            "resolved": resolved_parameters(self.cfg),
            "started_utc": self.started.isoformat(),
            "finished_utc": datetime.now(timezone.utc).isoformat(),
            "wall_time_s": time.perf_counter() - self._t0,
            "outputs": self.outputs,
        }
        manifest.update(self.extra)
        path = self.out / MANIFEST
        write_json(path, manifest)
        return path


def resolved_parameters(cfg: RunConfig) -> dict:
    g = cfg.geometry
    out = {
        "acceleration_m_per_s2": g.acceleration,
        "delta_x_m": g.delta_x,
        "total_time_s": g.total_time,
        "particle_mass_kg": g.particle_mass,
        "t_a_s": g.t_accel,
        "t_e_s": g.t_free,
    }
    if cfg.langevin is not None:
        out.update(
            {
                "omega_rot_rad_per_s": cfg.langevin.omega_rot,
                "gamma_per_s": cfg.langevin.gamma,
                "A_per_s3": cfg.langevin.amplitude_A,
            }
        )
    if cfg.inertia_kg_m2 is not None:
        out["inertia_kg_m2"] = cfg.inertia_kg_m2
    return out


def _frequency_grid(grid) -> np.ndarray:
    if grid.n_points == 1:
        f = np.array([grid.f_min_Hz])
    elif grid.spacing == "log":
        f = np.geomspace(grid.f_min_Hz, grid.f_max_Hz, grid.n_points)
    else:
        f = np.linspace(grid.f_min_Hz, grid.f_max_Hz, grid.n_points)
    return 2 * math.pi * f


def _spectrum_rows(spec):
    return [[w, v, spec.convention.value, spec.sidedness.value] for w, v in zip(spec.omega, spec.values)]


def _convention(cfg: RunConfig) -> Convention:
    return Convention(cfg.dephasing.convention)


def _peak_or_none(spec) -> dict | None:
    try:
        return vars(peak_metrics(spec))
    except InconclusivePeakError as exc:
        return {"inconclusive": str(exc)}


# --------------------------------------------------------------------------- commands


def cmd_simulate(cfg: RunConfig, run: Run, threads: int) -> int:
    params = cfg.noise_params()
    sim = cfg.simulation
    n_steps = int(round(sim.duration_s / sim.dt_s)) + 1
    grid = SimulationGrid(sim.dt_s, n_steps, master_seed=run.seed)
    if not 8 <= sim.segment_length <= n_steps:
        raise ConfigurationError(
            f"segment_length must lie in [8, {n_steps}] for this duration", key="simulation.segment_length"
        )
    run.claim("trajectory.csv", "psd_estimated.csv", "psd_analytic.csv")
    total, first = None, None
    for idx, theta, theta_dot in iter_blocks(params, grid, sim.n_trajectories, sim.block_size):
        est = estimate_psd_arrays(theta, sim.dt_s, sim.segment_length, "theta")
        weighted = est.values * len(idx)
        total = weighted if total is None else total + weighted
        if first is None:
            first = (theta[0], theta_dot[0])
            omega = est.omega
    estimated = replace(est, values=total / sim.n_trajectories)
    analytic = s_theta_analytic(params, omega, Convention.CALIBRATED)
    times = np.arange(n_steps) * sim.dt_s
    run.csv("trajectory.csv", TRAJECTORY_HEADER, zip(times, *first))
    run.csv("psd_estimated.csv", SPECTRUM_HEADER, _spectrum_rows(estimated))
    run.csv("psd_analytic.csv", SPECTRUM_HEADER, _spectrum_rows(analytic))
    df = omega[1] - omega[0]
    run.extra["simulation"] = {
        "n_steps": n_steps,
        "n_trajectories": sim.n_trajectories,
        "trajectory_written": 0,
        "segment_length": sim.segment_length,
        "welch": "hann window, 50% overlap, no detrending, two-sided density",
        "units": {"t": "s", "theta": "rad", "theta_dot": "rad/s", "value": "rad^2 s"},
        "frequency_bin_rad_per_s": df,
        "variance_estimated_rad2": estimated.variance(),
        "variance_analytic_rad2": params.amplitude_A / (2 * params.gamma * params.omega_rot**2)
        if params.gamma > 0
        else None,
        "peak_estimated": _peak_or_none(estimated),
    }
    print(f"wrote {sim.n_trajectories} trajectories' PSD to {run.out}")
    return EXIT_OK


def cmd_psd(cfg: RunConfig, run: Run, threads: int) -> int:
    params = cfg.noise_params()
    conv = _convention(cfg)
    omega = _frequency_grid(cfg.psd)
    run.claim("psd_theta.csv", "psd_itn.csv")
    s_theta = s_theta_analytic(params, omega, conv)
    s_itn = s_itn_analytic(params, omega, conv)
    run.csv("psd_theta.csv", SPECTRUM_HEADER, _spectrum_rows(s_theta))
    run.csv("psd_itn.csv", SPECTRUM_HEADER, _spectrum_rows(s_itn))
    # The squared-velocity spectrum is largest at zero frequency, so its
    # resonance is located inside a window around twice the torsion frequency.
    w = params.omega_rot
    window = (omega >= w) & (omega <= 3 * w)
    itn_peak = _peak_or_none(replace(s_itn, omega=omega[window], values=s_itn.values[window])) if window.sum() >= 3 else None
    run.extra["spectra"] = {
        "units": {"psd_theta.csv": "rad^2 s", "psd_itn.csv": "1/s^3"},
        "peak_theta": _peak_or_none(s_theta),
        "peak_itn": itn_peak,
    }
    print(f"wrote analytic spectra ({conv.value} convention) to {run.out}")
    return EXIT_OK


def cmd_transfer(cfg: RunConfig, run: Run, threads: int) -> int:
    geom = cfg.geometry
    omega = _frequency_grid(cfg.transfer)
    run.claim("transfer.csv")
    exact = transfer_exact(geom, omega)
    numeric = transfer_numeric(build_trajectories(geom), omega)
    approx = transfer_approx(geom, omega)
    run.columns(
        "transfer.csv",
        {
            "omega_rad_per_s": omega,
            "f_Hz": omega / (2 * math.pi),
            "F_exact_m4_s2": exact,
            "F_numeric_m4_s2": numeric,
            "F_approx_m4_s2": approx,
        },
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(numeric - exact) / np.abs(exact)
    run.extra["transfer"] = {
        "plateau_limit_m4_s2": plateau_limit(geom),
        "max_relative_difference_exact_numeric": float(np.nanmax(rel)) if rel.size else None,
    }
    print(f"wrote F(omega) at {len(omega)} frequencies to {run.out}")
    return EXIT_OK


def _dephasing_results(cfg: RunConfig, seed: int, threads: int, params=None) -> list:
    d = cfg.dephasing
    params = cfg.noise_params() if params is None else params
    out = []
    if d.method in ("spectral", "both"):
        out.append(
            gamma_spectral(
                cfg.geometry,
                params,
                d.total_time_s,
                convention=Convention(d.convention),
                omega_min=d.omega_min_rad_per_s,
                rtol=d.rtol,
            )
        )
    if d.method in ("mc", "both"):
        sim = cfg.simulation
        n_steps = int(round(cfg.geometry.total_time / sim.dt_s)) + 1
        grid = SimulationGrid(sim.dt_s, n_steps, master_seed=seed)
        out.append(
            gamma_montecarlo(
                cfg.geometry, params, grid, sim.n_trajectories, block_size=sim.block_size, threads=threads
            )
        )
    return out


def _verdicts(cfg: RunConfig, results) -> list[dict]:
    d = cfg.dephasing
    app = Application(d.application)
    out = []
    for r in results:
        v = verdict(r.gamma_value, app, d.threshold)
        out.append(
            {
                "method": r.method.value,
                "convention": r.convention.value,
                "Gamma": r.gamma_value,
                "threshold": v.threshold,
                "application": app.value,
                "passes": v.passes,
            }
        )
        word = "below" if v.passes else "NOT below"
        print(
            f"{r.method.value} ({r.convention.value} convention): Gamma = {r.gamma_value:.6g}, "
            f"{word} the {app.value} threshold {v.threshold:g}"
        )
    return out


def cmd_dephasing(cfg: RunConfig, run: Run, threads: int) -> int:
    run.claim("dephasing.json")
    results = _dephasing_results(cfg, run.seed, threads)
    verdicts = _verdicts(cfg, results)
    run.json("dephasing.json", {"results": [r.to_dict() for r in results], "verdicts": verdicts})
    return EXIT_OK


def cmd_gas(cfg: RunConfig, run: Run, threads: int) -> int:
    env = cfg.environment
    if env is None:
        raise ConfigurationError("the gas command needs an environment block", key="environment")
    run.claim("gas.json")
    inertia, box = cfg.inertia_kg_m2, cfg.box_side_m
    gamma = gas_damping(env, box, inertia)
    params = cfg.noise_params()
    payload = {
        "pressure_Pa": env.pressure,
        "temperature_K": env.temperature,
        "molecule_mass_kg": env.molecule_mass,
        "box_side_m": box,
        "inertia_kg_m2": inertia,
        "gamma_per_s": gamma,
        "gamma_rule_of_thumb_per_s": pressure_rule_of_thumb(env.pressure),
        "A_per_s3": thermal_amplitude(gamma, env.temperature, inertia),
        "omega_rot_rad_per_s": params.omega_rot,
    }
    if cfg.wire is not None:
        payload["torsion_constant_N_m"] = torsion_constant(cfg.wire)
        payload["omega_wire_rad_per_s"] = intrinsic_frequency(cfg.wire, inertia).omega_rot
    results = _dephasing_results(cfg, run.seed, threads, params)
    payload["dephasing"] = [r.to_dict() for r in results]
    payload["verdicts"] = _verdicts(cfg, results)
    print(f"gas damping gamma = {gamma:.6g} 1/s, thermal A = {payload['A_per_s3']:.6g} 1/s^3")
    run.json("gas.json", payload)
    return EXIT_OK


def fixed_params(cfg: RunConfig) -> FixedParams:
    env = cfg.environment
    base = FixedParams(cfg.geometry, cfg.noise_params())
    changes = {
        "convention": _convention(cfg),
        "rtol": cfg.dephasing.rtol,
        "total_time": cfg.dephasing.total_time_s,
    }
    if cfg.inertia_kg_m2 is not None:
        changes["moment_of_inertia"] = cfg.inertia_kg_m2
    if cfg.box_side_m is not None:
        changes["box_side"] = cfg.box_side_m
    if env is not None:
        changes.update(pressure=env.pressure, temperature=env.temperature, molecule_mass=env.molecule_mass)
    return replace(base, **changes)


def _grid(sweep: dict, key: str) -> GridSpec:
    if key not in sweep:
        raise ConfigurationError("this sweep kind needs a grid block", key=f"sweep.{key}")
    return GridSpec(**sweep[key])


def build_sweep(cfg: RunConfig, threads: int) -> SweepResult:
    """Validate the sweep block, then run it."""
    sweep = cfg.sweep
    if not sweep:
        raise ConfigurationError("missing sweep block", key="sweep")
    kind = sweep["kind"]
    fixed = fixed_params(cfg)
    threshold = sweep.get("threshold")
    thermal = sweep.get("thermal", False)
    if kind == "amplitude_bound":
        og, gg = _grid(sweep, "omega_rot_rad_per_s"), _grid(sweep, "gamma_per_s")
        if threshold is None:
            threshold = cfg.dephasing.threshold or DEFAULT_THRESHOLDS[Application(cfg.dephasing.application)]
        return amplitude_bound(og.values(), gg.values(), threshold, fixed, threads=threads)
    if kind == "grid":
        ag, gg = _grid(sweep, "A_per_s3"), _grid(sweep, "gamma_per_s")
        spec_a = SweepSpec(SweptParameter.AMPLITUDE_A, ag, fixed, threshold)
        spec_g = SweepSpec(SweptParameter.GAMMA, gg, fixed, threshold)
        return sweep_gamma_grid(spec_a, spec_g, threads=threads)
    key = {"omega_rot": "omega_rot_rad_per_s", "gamma": "gamma_per_s", "amplitude_A": "A_per_s3",
           "pressure": "pressure_Pa", "temperature": "temperature_K"}[kind]
    spec = SweepSpec(SweptParameter(kind), _grid(sweep, key), fixed, threshold, thermal)
    if kind == "omega_rot":
        return sweep_gamma_vs_omega(spec, refine_levels=sweep.get("refine_levels", 3), threads=threads)
    branches = sweep.get("omega_rot_branches_rad_per_s")
    if not branches:
        return run_sweep(spec, threads=threads)
    parts = [run_sweep(with_fixed(spec, langevin=fixed.langevin.with_(omega_rot=w)), threads=threads) for w in branches]
    columns = parts[0].columns
    if "omega_rot_rad_per_s" not in columns:
        columns = ["omega_rot_rad_per_s", *columns]
        rows = [[w, *r] for w, p in zip(branches, parts) for r in p.rows]
    else:
        rows = [r for p in parts for r in p.rows]
    meta = dict(parts[0].metadata)
    meta["branches_rad_per_s"] = list(branches)
    meta["wall_time_s"] = sum(p.metadata["wall_time_s"] for p in parts)
    return SweepResult(columns, rows, meta)


def cmd_sweep(cfg: RunConfig, run: Run, threads: int) -> int:
    run.claim("sweep.csv")
    result = build_sweep(cfg, threads)
    run.csv("sweep.csv", result.columns, result.rows)
    meta = {k: v for k, v in result.metadata.items() if k not in ("wall_time_s", "seed", "code_version")}
    run.extra["sweep"] = meta
    n_fail = len(result.failed)
    print(f"wrote {len(result.rows)} sweep points to {run.out / 'sweep.csv'}")
    for peak in meta.get("peaks", [])[:5]:
        print(f"  local maximum: f_rot = {peak['f_rot_Hz']:.6g} Hz, Gamma = {peak['Gamma']:.6g}")
    if n_fail:
        print(f"{n_fail} sweep point(s) failed; see the status column", file=sys.stderr)
        raise _SweepPointsFailed
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "psd": cmd_psd,
    "transfer": cmd_transfer,
    "dephasing": cmd_dephasing,
    "sweep": cmd_sweep,
    "gas": cmd_gas,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    run = None
    try:
        cfg, seed = assemble_config(args)
        out = args.out if args.out is not None else Path(cfg.output_directory)
        run = Run(args.command, cfg, seed, out, args.force)
        code = COMMANDS[args.command](cfg, run, args.threads)
    except _SweepPointsFailed:
        run.finish()
        return EXIT_NUMERICAL
    except _NUMERICAL_ERRORS as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ITNError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run.finish()
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
