import pytest

from dimf.errors import ConfigError
from dimf.models.config import ExperimentConfig
from dimf.types import ExperimentMode


def write(tmp_path, text: str):
    path = tmp_path / "config.yaml"
    path.write_text(text)
    return path


def test_defaults_without_a_file():
    cfg = ExperimentConfig.load(None, ExperimentMode.GAUSS_CONVERGENCE)
    assert cfg.dim == 16
    assert cfg.eps == [1.0, 3.0, 10.0]
    assert cfg.n_inner == [1, 2, 4, 5, 8, 16, 32]
    assert cfg.max_iters == 100_000
    assert cfg.threshold == 1e-10


def test_overrides_replace_file_values(tmp_path):
    path = write(tmp_path, "mode: gauss-convergence\nseed: 3\nthreshold: 1.0e-8\n")
    cfg = ExperimentConfig.load(path, ExperimentMode.GAUSS_CONVERGENCE, seed=7, threshold=None, output_dir="out")
    assert cfg.seed == 7
    assert cfg.threshold == 1e-8
    assert cfg.output_dir == "out"


def test_unknown_key_is_rejected(tmp_path):
    path = write(tmp_path, "mode: gauss-convergence\ndimension: 4\n")
    with pytest.raises(ConfigError, match="dimension"):
        ExperimentConfig.load(path, ExperimentMode.GAUSS_CONVERGENCE)


def test_nested_mapping_is_rejected(tmp_path):
    path = write(tmp_path, "mode: gauss-convergence\neps:\n  low: 1.0\n")
    with pytest.raises(ConfigError, match="scalar"):
        ExperimentConfig.load(path, ExperimentMode.GAUSS_CONVERGENCE)


def test_mode_mismatch_is_rejected(tmp_path):
    path = write(tmp_path, "mode: grid-convergence\n")
    with pytest.raises(ConfigError, match="grid-convergence"):
        ExperimentConfig.load(path, ExperimentMode.GAUSS_CONVERGENCE)


def test_missing_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.yaml", ExperimentMode.ORACLE_CHECK)
    with pytest.raises(ConfigError):
        ExperimentConfig.load(write(tmp_path, "mode: [unclosed\n"), ExperimentMode.ORACLE_CHECK)
    with pytest.raises(ConfigError):
        ExperimentConfig.load(write(tmp_path, "- 1\n- 2\n"), ExperimentMode.ORACLE_CHECK)


@pytest.mark.parametrize(
    "text",
    [
        "eps: [1.0, -2.0]\n",
        "eps: []\n",
        "n_inner: [0, 2]\n",
        "threshold: 0.0\n",
        "max_iters: 100001\n",
        "grid_low: 1.0\ngrid_high: 1.0\n",
        "grid_d: 3\n",
    ],
)
def test_invalid_values(tmp_path, text):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(write(tmp_path, text), ExperimentMode.GAUSS_CONVERGENCE)


def test_explicit_time_grid(tmp_path):
    path = write(tmp_path, "n_inner: [2]\ntime_grid: [0.2, 0.7]\n")
    cfg = ExperimentConfig.load(path, ExperimentMode.GAUSS_CONVERGENCE)
    assert cfg.time_grid_for(2).times == (0.0, 0.2, 0.7, 1.0)


@pytest.mark.parametrize(
    "text",
    [
        "n_inner: [2, 4]\ntime_grid: [0.2, 0.7]\n",
        "n_inner: [3]\ntime_grid: [0.2, 0.7]\n",
        "n_inner: [2]\ntime_grid: [0.7, 0.2]\n",
        "n_inner: [2]\ntime_grid: [0.0, 0.5]\n",
    ],
)
def test_explicit_time_grid_rules(tmp_path, text):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(write(tmp_path, text), ExperimentMode.GAUSS_CONVERGENCE)


def test_uniform_time_grid():
    cfg = ExperimentConfig(mode=ExperimentMode.GAUSS_CONVERGENCE)
    assert cfg.time_grid_for(4).n_inner == 4
