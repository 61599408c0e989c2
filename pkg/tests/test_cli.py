import json
import subprocess
import sys

import pytest

from spdcsource import cli

FAST = """
seed = 3
[pm_curve]
temperature_range = [28.0, 40.0]
step = 2.0
[phase_map]
half_width = 1.0
step = 0.01
scan_step = 1.0
[visibility]
powers = [0.1, 1.0, 5.0]
mc_powers = [0.05, 2.0]
mc_target_coincidences = 2000
"""


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.toml"
    path.write_text(FAST)
    return str(path)


def run(*args):
    return cli.main(list(args))


def test_pm_curve_header_and_rerun_identical(tmp_path, fast_config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("pm-curve", "--config", fast_config, "--out", str(a)) == 0
    assert run("pm-curve", "--config", fast_config, "--out", str(b)) == 0
    first = (a / "pm_curve.csv").read_bytes()
    assert first.splitlines()[0] == b"temperature_C,lambda_s_nm,lambda_i_nm,fwhm_s_nm,fwhm_i_nm"
    assert first == (b / "pm_curve.csv").read_bytes()


def test_all_is_deterministic(tmp_path, fast_config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("all", "--config", fast_config, "--out", str(a)) == 0
    assert run("all", "--config", fast_config, "--out", str(b)) == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    summary = json.loads((a / "summary.json").read_text())
    assert summary["state"]["fidelity"] >= 0.98
    assert {"phase_map_compensated.csv", "phase_map_uncompensated.csv", "compensator_report.json"} <= {
        p.name for p in (a / "phase_map").iterdir()}


def test_seed_changes_monte_carlo(tmp_path, fast_config):
    a, b = tmp_path / "a", tmp_path / "b"
    run("visibility", "--config", fast_config, "--out", str(a))
    run("visibility", "--config", fast_config, "--out", str(b), "--seed", "4")
    name = "visibility_montecarlo.csv"
    assert (a / name).read_bytes() != (b / name).read_bytes()
    assert (a / "visibility_analytic.csv").read_bytes() == (b / "visibility_analytic.csv").read_bytes()


def test_spectrum_lobes_straddle_degeneracy(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[spectrum]\ntemperatures = [40.0]\n")
    assert run("spectrum", "--config", str(cfg), "--out", str(tmp_path / "o")) == 0
    row = (tmp_path / "o" / "spectrum_summary.csv").read_text().splitlines()[1].split(",")
    assert float(row[1]) < 810.08 < float(row[2])


def test_json_format(tmp_path, fast_config):
    assert run("pm-curve", "--config", fast_config, "--out", str(tmp_path / "o"), "--format", "json") == 0
    rows = json.loads((tmp_path / "o" / "pm_curve.json").read_text())
    assert set(rows[0]) == {"temperature_C", "lambda_s_nm", "lambda_i_nm", "fwhm_s_nm", "fwhm_i_nm"}


def test_state_with_tomography(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[state]\ntomography_counts = 100000\n[phase_map]\nhalf_width = 1.0\nstep = 0.01\n")
    assert run("state", "--config", str(cfg), "--out", str(tmp_path / "o")) == 0
    assert (tmp_path / "o" / "tomography_counts.csv").exists()
    info = json.loads((tmp_path / "o" / "state_summary.json").read_text())
    assert info["tomography_fidelity"] > 0.95


@pytest.mark.parametrize("text,key", [
    ("[source]\npump_wavelenght = 405.0\n", "source.pump_wavelenght"),
    ("[detection]\ndark_counts = 'many'\n", "detection.dark_counts"),
    ("bogus = 1\n", "bogus"),
    ("[visibility]\nwindows = 3\n", "visibility.windows"),
    ("[source]\npoling_period = 500.0\n", "poling_period"),
    ("[source\n", "malformed"),
])
def test_config_errors_exit_2(tmp_path, capsys, text, key):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(text)
    out = tmp_path / "o"
    assert run("spectrum", "--config", str(cfg), "--out", str(out)) == 2
    assert key in capsys.readouterr().err
    assert not out.exists()


def test_computation_error_exit_1_and_no_partial_output(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    # no crystal temperature phase-matches a 700.5 nm signal
    cfg.write_text("[source]\ndesign_signal_wavelength = 700.5\n")
    out = tmp_path / "o"
    assert run("all", "--config", str(cfg), "--out", str(out)) == 1
    assert not out.exists()
    assert not list(tmp_path.glob(".o.tmp-*"))
    assert "failed" in capsys.readouterr().err


def test_existing_output_replaced(tmp_path, fast_config):
    out = tmp_path / "o"
    out.mkdir()
    (out / "stale.txt").write_text("x")
    assert run("pm-curve", "--config", fast_config, "--out", str(out)) == 0
    assert not (out / "stale.txt").exists()


def test_console_entry_point(tmp_path, fast_config):
    res = subprocess.run([sys.executable, "-m", "spdcsource.cli", "pm-curve", "--config", fast_config,
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
