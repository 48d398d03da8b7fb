import hashlib
import json
import subprocess
import sys

import pytest
import yaml

from itnoise.cli import main
from itnoise.config import load_preset, parse_config
from itnoise.io import read_csv

INTERFEROMETER = {"particle_mass_kg": 1.0e-15, "eta_T_per_m": 1.0e4, "t_a_s": 0.25, "t_e_s": 0.0}


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_transfer_preset(tmp_path, capsys):
    out = tmp_path / "fig2"
    assert main(["transfer", "--preset", "fig2", "--out", str(out)]) == 0
    header, rows = read_csv(out / "transfer.csv")
    assert header == ["omega_rad_per_s", "f_Hz", "F_exact_m4_s2", "F_numeric_m4_s2", "F_approx_m4_s2"]
    assert len(rows) == 501
    assert float(rows[0][1]) == pytest.approx(1e-2) and float(rows[-1][1]) == pytest.approx(1e3)
    m = manifest(out)
    assert m["outputs"]["transfer.csv"] == hashlib.sha256((out / "transfer.csv").read_bytes()).hexdigest()
    assert m["seed"] == 0 and m["command"] == "transfer"
    assert m["resolved"]["delta_x_m"] == pytest.approx(1.15875e-5)
    again, preset = parse_config(m["config"]), parse_config(load_preset("fig2"))
    assert (again.geometry, again.transfer) == (preset.geometry, preset.transfer)
    assert m["transfer"]["max_relative_difference_exact_numeric"] < 1e-9


def test_config_round_trip_through_manifest(tmp_path):
    out = tmp_path / "o"
    assert main(["dephasing", "--preset", "qgem", "--out", str(out), "--convention", "calibrated"]) == 0
    m = manifest(out)
    cfg = parse_config(m["config"])
    assert cfg.dephasing.convention.value == "calibrated"
    out2 = tmp_path / "o2"
    assert main(["dephasing", "--config", str(write_yaml(tmp_path / "rt.yaml", m["config"])), "--out", str(out2)]) == 0
    assert (out / "dephasing.json").read_bytes() == (out2 / "dephasing.json").read_bytes()


def test_free_flight_and_single_point(tmp_path):
    cfg = write_yaml(
        tmp_path / "c.yaml",
        {
            "interferometer": dict(INTERFEROMETER, t_e_s=0.1),
            "transfer": {"f_min_Hz": 0.5, "f_max_Hz": 0.5, "n_points": 1},
        },
    )
    assert main(["transfer", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    _, rows = read_csv(tmp_path / "o" / "transfer.csv")
    assert len(rows) == 1
    assert float(rows[0][3]) == pytest.approx(float(rows[0][2]), rel=1e-9)


def test_collision_needs_force(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["transfer", "--preset", "fig2", "--out", str(out)]) == 0
    before = (out / "transfer.csv").read_bytes()
    assert main(["transfer", "--preset", "fig2", "--out", str(out)]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["transfer", "--preset", "fig2", "--out", str(out), "--force"]) == 0
    assert (out / "transfer.csv").read_bytes() == before


def test_bad_key_exits_2_naming_it(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "c.yaml", {"interferometer": dict(INTERFEROMETER, t_a_ms=250)})
    assert main(["transfer", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "interferometer.t_a_ms" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_config_exits_2(tmp_path):
    assert main(["transfer", "--out", str(tmp_path)]) == 2
    assert main(["transfer", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as info:
        main(["transfer", "--preset", "fig2", "--seed", "-3"])
    assert info.value.code == 2


def _small_sim(tmp_path, **sim):
    data = {
        "interferometer": INTERFEROMETER,
        "langevin": {"f_rot_Hz": 1.0, "gamma_per_s": 1.0e-10, "A_per_s3": 1.0e-6},
        "simulation": dict({"dt_s": 0.01, "duration_s": 5.11, "n_trajectories": 8, "segment_length": 128}, **sim),
    }
    return write_yaml(tmp_path / "sim.yaml", data)


def test_simulate_outputs_and_seed(tmp_path):
    cfg = _small_sim(tmp_path)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(b), "--seed", "0"]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(c), "--seed", "5"]) == 0
    header, rows = read_csv(a / "trajectory.csv")
    assert header == ["t", "theta", "theta_dot"] and len(rows) == 512
    assert read_csv(a / "psd_estimated.csv")[0] == ["omega_rad_per_s", "value", "convention", "sidedness"]
    for name in ("trajectory.csv", "psd_estimated.csv", "psd_analytic.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "trajectory.csv").read_bytes() != (c / "trajectory.csv").read_bytes()
    assert manifest(a)["seed"] == 0 and manifest(c)["seed"] == 5
    assert manifest(a)["config"]["simulation"]["master_seed"] == 0


def test_psd_command(tmp_path):
    assert main(["psd", "--preset", "fig3", "--out", str(tmp_path)]) == 0
    m = manifest(tmp_path)
    assert m["spectra"]["peak_itn"]["peak_omega"] == pytest.approx(2 * m["resolved"]["omega_rot_rad_per_s"], rel=1e-3)
    _, rows = read_csv(tmp_path / "psd_itn.csv")
    assert {r[2] for r in rows} == {"paper"}


def test_dephasing_both_methods(tmp_path, capsys):
    assert main(["dephasing", "--preset", "qgem", "--method", "both", "--out", str(tmp_path)]) == 0
    stdout = capsys.readouterr().out
    assert "spectral (paper convention)" in stdout and "mc (calibrated convention)" in stdout
    res = json.loads((tmp_path / "dephasing.json").read_text())
    assert [r["method"] for r in res["results"]] == ["spectral", "mc"]
    assert [v["threshold"] for v in res["verdicts"]] == [0.01, 0.01]


def test_insufficient_samples_exit_3(tmp_path, capsys):
    cfg = write_yaml(
        tmp_path / "c.yaml",
        {
            "interferometer": INTERFEROMETER,
            "langevin": {"f_rot_Hz": 1.0, "gamma_per_s": 1.0e-2, "A_per_s3": 1.0e-10},
            "simulation": {"dt_s": 1.0e-3, "n_trajectories": 100},
            "dephasing": {"method": "mc"},
        },
    )
    assert main(["dephasing", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "numerical failure" in capsys.readouterr().err
    assert not (tmp_path / "o" / "manifest.json").exists()


def test_gas_command(tmp_path):
    assert main(["gas", "--preset", "gas", "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "gas.json").read_text())
    assert res["omega_wire_rad_per_s"] == pytest.approx(0.735, rel=0.01)
    assert res["dephasing"][0]["gamma_value"] < 1e-25
    assert res["gamma_per_s"] == pytest.approx(0.02429229, rel=1e-6)


def test_gas_needs_environment(tmp_path):
    assert main(["gas", "--preset", "qgem", "--out", str(tmp_path)]) == 2


def test_sweep_with_spec_file(tmp_path, capsys):
    spec = write_yaml(
        tmp_path / "spec.yaml",
        {"sweep": {"kind": "omega_rot", "omega_rot_rad_per_s": {"lo": 1.0, "hi": 30.0, "count": 41}}},
    )
    out = tmp_path / "o"
    assert main(["sweep", str(spec), "--preset", "fig4", "--out", str(out), "--threads", "2"]) == 0
    header, rows = read_csv(out / "sweep.csv")
    assert header[:3] == ["omega_rot_rad_per_s", "f_rot_Hz", "Gamma"] and len(rows) == 41
    assert manifest(out)["sweep"]["peaks"]
    assert "local maximum" in capsys.readouterr().out


def test_sweep_branches_share_one_file(tmp_path):
    spec = write_yaml(tmp_path / "spec.yaml", {"sweep": {"gamma_per_s": {"lo": 1e-4, "hi": 1e2, "count": 4}}})
    assert main(["sweep", str(spec), "--preset", "fig8", "--out", str(tmp_path / "o")]) == 0
    header, rows = read_csv(tmp_path / "o" / "sweep.csv")
    assert header[0] == "omega_rot_rad_per_s" and len(rows) == 12
    assert len({r[0] for r in rows}) == 3


def test_sweep_amplitude_bound(tmp_path):
    spec = write_yaml(
        tmp_path / "spec.yaml",
        {"sweep": {"omega_rot_rad_per_s": {"lo": 1.0, "hi": 10.0, "count": 2},
                   "gamma_per_s": {"lo": 1e-3, "hi": 1e-1, "count": 2}}},
    )
    assert main(["sweep", str(spec), "--preset", "fig7", "--out", str(tmp_path / "o")]) == 0
    header, rows = read_csv(tmp_path / "o" / "sweep.csv")
    assert "A_bound_per_s3" in header and len(rows) == 4


def test_empty_grid_rejected_before_compute(tmp_path, capsys):
    spec = write_yaml(tmp_path / "spec.yaml", {"sweep": {"omega_rot_rad_per_s": {"lo": 1, "hi": 2, "count": 0}}})
    assert main(["sweep", str(spec), "--preset", "fig4", "--out", str(tmp_path / "o")]) == 2
    assert "sweep.omega_rot_rad_per_s.count" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_failed_sweep_points_exit_3(tmp_path):
    spec = write_yaml(
        tmp_path / "spec.yaml",
        {"sweep": {"kind": "gamma", "gamma_per_s": {"lo": 0.0, "hi": 1.0, "count": 2, "spacing": "linear"}}},
    )
    assert main(["sweep", str(spec), "--preset", "fig5", "--out", str(tmp_path / "o")]) == 3
    assert (tmp_path / "o" / "manifest.json").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "itnoise", "transfer", "--preset", "fig2", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "itnoise", "--version"], capture_output=True, text=True)
    assert "0.1.0" in proc.stdout
