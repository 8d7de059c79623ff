import json
from pathlib import Path

import numpy as np
import pytest

from dimf.bridge import TimeGrid
from dimf.models.config import ExperimentConfig
from dimf.models.summary import RunSummary
from dimf.services.benchmark import make_benchmark_gaussians
from dimf.services.bridge_check import monte_carlo_sigmas, run_bridge_check
from dimf.services.gauss_convergence import run_gauss_convergence, sweep_checks, sweep_diagnostics
from dimf.services.grid_convergence import run_grid_convergence
from dimf.services.oracle_check import run_oracle_check
from dimf.types import ExperimentMode

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def run_summary(eps: float, n_inner: int, hits: int | None, r2: float | None = 0.99) -> RunSummary:
    return RunSummary(
        eps=eps,
        n_inner=n_inner,
        dim=1,
        max_iters=1000,
        iterations_executed=hits or 1000,
        iterations_to_threshold=hits,
        reached_threshold=hits is not None,
        monotone=True,
        max_kl_increase=0.0,
        log_kl_slope=-1.0,
        log_kl_r2=r2,
        final_kl=1e-11,
        final_process_kl=1e-11,
        csv_file="x.csv",
        wall_ms=0.0,
    )


def test_benchmark_gaussians():
    p0, p1 = make_benchmark_gaussians(16, seed=0)
    for g in (p0, p1):
        np.testing.assert_array_equal(g.mean, np.zeros(16))
        eigenvalues = np.linalg.eigvalsh(g.cov)
        assert eigenvalues.min() >= 0.5 - 1e-12
        assert eigenvalues.max() <= 2.0 + 1e-12
    assert not np.allclose(p0.cov, p1.cov)

    again = make_benchmark_gaussians(16, seed=0)
    np.testing.assert_array_equal(again[0].cov, p0.cov)
    np.testing.assert_array_equal(again[1].cov, p1.cov)
    assert not np.allclose(make_benchmark_gaussians(16, seed=1)[0].cov, p0.cov)


def test_gauss_sweep_unit_1d(tmp_path):
    cfg = ExperimentConfig(
        mode=ExperimentMode.GAUSS_CONVERGENCE,
        dim=1,
        eps=[1.0],
        n_inner=[1, 3],
        gauss_marginals="standard",
        threshold=1e-13,
        record_wall_time=False,
    )
    summary = run_gauss_convergence(cfg, jobs=2, out_dir=tmp_path)

    assert summary.passed
    assert [run.n_inner for run in summary.runs] == [1, 3]
    for run in summary.runs:
        assert run.reached_threshold and run.monotone
        assert run.final_correlation == pytest.approx(GOLDEN, abs=1e-6)
        assert run.correlation_error < 1e-6
        assert run.final_process_kl < 1e-8
        assert (tmp_path / run.csv_file).exists()

    data = json.loads((tmp_path / "summary.json").read_text())
    assert data["passed"] is True
    assert "unit_correlation" in {check["name"] for check in data["checks"]}
    assert data["config"]["n_inner"] == [1, 3]
    assert {run["csv_file"] for run in data["runs"]} == {"gauss_eps1_N1.csv", "gauss_eps1_N3.csv"}


def test_unit_anchor_config_converges_to_stationarity_roots(tmp_path):
    config_path = Path(__file__).resolve().parents[1] / "configs" / "gauss_1d.yaml"
    cfg = ExperimentConfig.load(config_path, ExperimentMode.GAUSS_CONVERGENCE)
    summary = run_gauss_convergence(cfg, out_dir=tmp_path)

    assert summary.passed, summary.failed_checks()
    by_eps = {run.eps: run.final_correlation for run in summary.runs}
    assert by_eps[1.0] == pytest.approx(0.618034, abs=1e-6)
    assert by_eps[10.0] == pytest.approx(0.099020, abs=1e-6)


def test_unit_correlation_check_fails_on_loose_threshold(tmp_path):
    cfg = ExperimentConfig(
        mode=ExperimentMode.GAUSS_CONVERGENCE,
        dim=1,
        eps=[1.0],
        n_inner=[3],
        gauss_marginals="standard",
        threshold=1e-6,
        record_wall_time=False,
    )
    summary = run_gauss_convergence(cfg, out_dir=tmp_path)
    failed = {c.name for c in summary.failed_checks()}
    assert summary.runs[0].reached_threshold
    assert "unit_correlation" in failed and "threshold_reached" not in failed


def test_gauss_sweep_reports_unreached_threshold(tmp_path):
    cfg = ExperimentConfig(
        mode=ExperimentMode.GAUSS_CONVERGENCE,
        dim=2,
        eps=[1.0],
        n_inner=[1],
        max_iters=2,
        record_wall_time=False,
    )
    summary = run_gauss_convergence(cfg, out_dir=tmp_path)
    run = summary.runs[0]
    assert run.iterations_executed == 2
    assert not run.reached_threshold
    assert [c.name for c in summary.failed_checks()] == ["threshold_reached"]


def test_sweep_diagnostics():
    runs = [
        run_summary(1.0, 4, 200),
        run_summary(1.0, 8, 30),
        run_summary(1.0, 32, 25),
        run_summary(10.0, 4, 20),
        run_summary(10.0, 8, 4, r2=None),
    ]
    diagnostics = sweep_diagnostics(runs)
    assert diagnostics.eps_ratio_n_inner == 4
    assert diagnostics.eps_ratio_pair == [1.0, 10.0]
    assert diagnostics.eps_ratio == pytest.approx(10.0)
    assert diagnostics.n_saturation_ratio == pytest.approx(1.2)
    assert diagnostics.min_log_kl_r2 == pytest.approx(0.99)
    assert diagnostics.runs_without_rate_fit == 1


def checks_by_name(runs: list[RunSummary], **overrides) -> dict:
    cfg = ExperimentConfig(mode=ExperimentMode.GAUSS_CONVERGENCE, **overrides)
    return {check.name: check for check in sweep_checks(runs, cfg, sweep_diagnostics(runs))}


def test_sweep_checks_pass_on_expected_ratios():
    runs = [
        run_summary(1.0, 5, 27),
        run_summary(10.0, 5, 5),
        run_summary(1.0, 8, 25),
        run_summary(1.0, 32, 23),
        run_summary(10.0, 8, 3, r2=None),
    ]
    checks = checks_by_name(runs)
    assert set(checks) == {"kl_monotone", "threshold_reached", "log_kl_linear_fit", "eps_ratio", "n_saturation"}
    assert all(check.passed for check in checks.values())
    assert checks["eps_ratio"].details["ratio"] == pytest.approx(5.4)
    assert checks["log_kl_linear_fit"].details["runs_without_rate_fit"] == 1


@pytest.mark.parametrize(
    "fast_hits,coarse_hits,failing",
    [
        (30, 25, {"eps_ratio"}),  # eps = 10 no faster than eps = 1
        (1, 25, {"eps_ratio"}),  # ratio 27 above 20
        (5, 50, {"n_saturation"}),  # N = 8 more than twice N = 32
    ],
)
def test_sweep_checks_flag_out_of_range_ratios(fast_hits, coarse_hits, failing):
    runs = [
        run_summary(1.0, 5, 27),
        run_summary(10.0, 5, fast_hits),
        run_summary(1.0, 8, coarse_hits),
        run_summary(1.0, 32, 23),
    ]
    checks = checks_by_name(runs)
    assert {name for name, check in checks.items() if not check.passed} == failing


def test_sweep_checks_flag_poor_fit_and_unreached_ratio_run():
    runs = [run_summary(1.0, 5, 27, r2=0.9), run_summary(10.0, 5, None)]
    checks = checks_by_name(runs)
    assert not checks["log_kl_linear_fit"].passed
    assert not checks["eps_ratio"].passed
    assert checks["eps_ratio"].details["ratio"] == "undefined"


def test_sweep_checks_skip_ratios_absent_from_sweep():
    checks = checks_by_name([run_summary(1.0, 3, 12), run_summary(3.0, 3, 6)])
    assert "eps_ratio" not in checks and "n_saturation" not in checks


def test_grid_sweep_symmetric(tmp_path):
    cfg = ExperimentConfig(
        mode=ExperimentMode.GRID_CONVERGENCE,
        eps=[1.0],
        n_inner=[1, 2],
        grid_points=7,
        record_wall_time=False,
    )
    summary = run_grid_convergence(cfg, out_dir=tmp_path)
    assert summary.passed
    for run in summary.grid_runs:
        assert run.reached_tolerance
        assert run.asymmetry < 1e-10
        assert run.discretization_gap >= 0.0
        assert (tmp_path / run.csv_file).exists()


def test_monte_carlo_sigmas_is_small():
    rng = np.random.default_rng(np.random.SeedSequence([0, 0, 0]))
    assert monte_carlo_sigmas(rng, 1, TimeGrid.uniform(1), 1.0, 20_000) < 5.0


def test_bridge_check(tmp_path):
    cfg = ExperimentConfig(
        mode=ExperimentMode.BRIDGE_CHECK,
        dim=1,
        eps=[1.0],
        n_inner=[1],
        mc_paths=20_000,
        mc_sigmas=5.0,
        projection_instances=3,
    )
    summary = run_bridge_check(cfg, out_dir=tmp_path)
    assert summary.passed, summary.failed_checks()
    assert {c.name for c in summary.checks} >= {
        "reciprocal_covariance_monte_carlo",
        "cross_covariance_composition",
        "gaussian_reciprocal_keeps_coupling",
        "grid_markovian_keeps_slices",
    }
    assert (tmp_path / "summary.json").exists()


def test_oracle_check(tmp_path):
    cfg = ExperimentConfig(mode=ExperimentMode.ORACLE_CHECK, eps=[1.0, 3.0], oracle_instances=2, oracle_dim=2)
    summary = run_oracle_check(cfg, out_dir=tmp_path)
    assert summary.passed, summary.failed_checks()
    assert len(summary.checks) == 5


@pytest.mark.slow
def test_full_gaussian_study(tmp_path):
    cfg = ExperimentConfig(mode=ExperimentMode.GAUSS_CONVERGENCE)
    summary = run_gauss_convergence(cfg, jobs=4, out_dir=tmp_path)
    assert summary.passed, summary.failed_checks()
    assert len(summary.runs) == 21
    assert all(run.monotone and run.reached_threshold for run in summary.runs)
    assert {check.name for check in summary.checks} >= {"log_kl_linear_fit", "eps_ratio", "n_saturation"}
    assert summary.diagnostics.eps_ratio_n_inner == 5
    assert 5.0 <= summary.diagnostics.eps_ratio <= 20.0
    assert 0.5 <= summary.diagnostics.n_saturation_ratio <= 2.0
    assert summary.diagnostics.min_log_kl_r2 >= 0.98
