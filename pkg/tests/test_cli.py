import json
import sys

import pytest
from typer.testing import CliRunner

import main
from main import EXIT_OK, EXIT_TOLERANCE, EXIT_USAGE, app

runner = CliRunner()


def write_config(tmp_path, text: str):
    path = tmp_path / "config.yaml"
    path.write_text(text)
    return path


GAUSS_CONFIG = """\
mode: gauss-convergence
dim: 1
eps: [1.0]
n_inner: [1]
gauss_marginals: standard
threshold: 1.0e-13
record_wall_time: false
"""

GRID_CONFIG = """\
mode: grid-convergence
eps: [1.0]
n_inner: [1, 2]
grid_points: 5
record_wall_time: false
"""


def test_gauss_convergence_succeeds(tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(
        app, ["gauss-convergence", "--config", str(write_config(tmp_path, GAUSS_CONFIG)), "--out", str(out)]
    )
    assert result.exit_code == EXIT_OK, result.output
    assert (out / "gauss_eps1_N1.csv").read_text().startswith("iter,kl_coupling_to_sb,kl_step,wall_ms\n")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is True
    assert summary["config"]["output_dir"] == str(out)


def test_flags_override_config(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, GAUSS_CONFIG)
    result = runner.invoke(
        app, ["gauss-convergence", "-c", str(config), "-o", str(out), "--seed", "9", "--threshold", "1e-12"]
    )
    assert result.exit_code == EXIT_OK, result.output
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seed"] == 9
    assert summary["config"]["threshold"] == 1e-12


def test_unknown_config_key_exits_with_usage_error(tmp_path):
    config = write_config(tmp_path, GAUSS_CONFIG + "iterations: 10\n")
    result = runner.invoke(app, ["gauss-convergence", "--config", str(config), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_USAGE
    assert not (tmp_path / "out").exists()


def test_mode_mismatch_exits_with_usage_error(tmp_path):
    config = write_config(tmp_path, GRID_CONFIG)
    result = runner.invoke(app, ["oracle-check", "--config", str(config), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_USAGE


def test_under_resolved_grid_exits_with_usage_error(tmp_path):
    config = write_config(tmp_path, GRID_CONFIG.replace("eps: [1.0]", "eps: [1.0e-310]"))
    result = runner.invoke(app, ["grid-convergence", "--config", str(config), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_USAGE


def test_failed_check_exits_with_tolerance_status(tmp_path):
    config = write_config(
        tmp_path,
        "mode: bridge-check\ndim: 1\neps: [1.0]\nn_inner: [1]\nmc_paths: 1000\nmc_sigmas: 1.0e-6\nprojection_instances: 1\n",
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["bridge-check", "--config", str(config), "--out", str(out)])
    assert result.exit_code == EXIT_TOLERANCE
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is False


def test_reruns_are_byte_identical(tmp_path):
    config = write_config(tmp_path, GRID_CONFIG)
    out = tmp_path / "out"
    args = ["grid-convergence", "--config", str(config), "--out", str(out), "--jobs", "2"]

    assert runner.invoke(app, args).exit_code == EXIT_OK
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert runner.invoke(app, args).exit_code == EXIT_OK
    second = {p.name: p.read_bytes() for p in out.iterdir()}

    assert set(first) == {"grid_eps1_N1.csv", "grid_eps1_N2.csv", "summary.json"}
    assert first == second


@pytest.mark.parametrize(
    "argv,code",
    [
        (["gauss-convergence", "--no-such-flag"], EXIT_USAGE),
        (["no-such-mode"], EXIT_USAGE),
    ],
)
def test_entry_point_maps_usage_errors(monkeypatch, argv, code):
    monkeypatch.setattr(sys, "argv", ["sbridge-dimf", *argv])
    with pytest.raises(SystemExit) as excinfo:
        main.main()
    assert excinfo.value.code == code


def test_entry_point_exit_status(tmp_path, monkeypatch):
    config = write_config(tmp_path, GAUSS_CONFIG + "unknown: 1\n")
    monkeypatch.setattr(sys, "argv", ["sbridge-dimf", "gauss-convergence", "--config", str(config)])
    with pytest.raises(SystemExit) as excinfo:
        main.main()
    assert excinfo.value.code == EXIT_USAGE
