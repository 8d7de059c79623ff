from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from dimf.bridge import TimeGrid
from dimf.errors import ConfigError
from dimf.gauss_dimf import DEFAULT_THRESHOLD, MAX_ITERS_CAP
from dimf.types import ExperimentMode
from dimf.utils.io_utils import read_flat_yaml


class ExperimentConfig(BaseModel):
    """Flat experiment config; every key of a config file maps to one field."""
    model_config = ConfigDict(extra="forbid")

    mode: ExperimentMode

    # Gaussian sweep
    dim: int = Field(16, ge=1)
    eps: List[float] = [1.0, 3.0, 10.0]
    n_inner: List[int] = [1, 2, 4, 5, 8, 16, 32]
    time_grid: Union[Literal["uniform"], List[float]] = "uniform"
    gauss_marginals: Literal["benchmark", "standard"] = "benchmark"
    max_iters: int = Field(MAX_ITERS_CAP, ge=1, le=MAX_ITERS_CAP)
    threshold: float = Field(DEFAULT_THRESHOLD, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0)
    output_dir: str = "results"
    record_wall_time: bool = True

    # Grid regime
    grid_points: int = Field(15, ge=2)
    grid_low: float = -2.0
    grid_high: float = 2.0
    grid_d: int = Field(1, ge=1, le=2)
    grid_p0_mean: float = 0.0
    grid_p0_std: float = Field(0.8, gt=0.0)
    grid_p1_mean: float = 0.0
    grid_p1_std: float = Field(0.8, gt=0.0)
    grid_max_iters: int = Field(500, ge=1)
    grid_tol: float = Field(1e-10, gt=0.0)

    # Oracle and projection checks
    oracle_instances: int = Field(10, ge=1)
    oracle_dim: int = Field(4, ge=1)
    oracle_grid_points: int = Field(201, ge=3)
    oracle_grid_range: float = Field(6.0, gt=0.0)
    mc_paths: int = Field(100_000, ge=100)
    mc_sigmas: float = Field(3.0, gt=0.0)
    projection_instances: int = Field(20, ge=1)

    @field_validator("eps")
    @classmethod
    def check_eps(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("eps must list at least one value")
        if any(not e > 0.0 for e in value):
            raise ValueError(f"every eps must be > 0, got {value}")
        return value

    @field_validator("n_inner")
    @classmethod
    def check_n_inner(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("n_inner must list at least one value")
        if any(n < 1 for n in value):
            raise ValueError(f"every N must be >= 1, got {value}")
        return value

    @model_validator(mode="after")
    def check_grids(self) -> "ExperimentConfig":
        if self.grid_high <= self.grid_low:
            raise ValueError(f"grid_high ({self.grid_high}) must exceed grid_low ({self.grid_low})")
        if isinstance(self.time_grid, list):
            if len(self.n_inner) != 1:
                raise ValueError("explicit time_grid needs exactly one value in n_inner")
            if len(self.time_grid) != self.n_inner[0]:
                raise ValueError(f"time_grid has {len(self.time_grid)} inner times, n_inner is {self.n_inner[0]}")
            TimeGrid.from_inner(self.time_grid)
        return self

    def time_grid_for(self, n_inner: int) -> TimeGrid:
        if isinstance(self.time_grid, list):
            return TimeGrid.from_inner(self.time_grid)
        return TimeGrid.uniform(n_inner)

    @classmethod
    def load(cls, path: Optional[Path], mode: ExperimentMode, **overrides) -> "ExperimentConfig":
        """
        Build the effective config from a YAML file plus command-line overrides.

        Args:
            path: Flat YAML config, or None for the defaults
            mode: Mode of the command being run; a file naming another mode is rejected
            overrides: Field values that replace the file's; None values are ignored

        Returns:
            The validated ExperimentConfig
        """
        data = read_flat_yaml(path)
        file_mode = data.setdefault("mode", mode.value)
        if file_mode != mode.value:
            raise ConfigError(f"config {path} is for mode '{file_mode}', not '{mode.value}'")

        data.update({key: value for key, value in overrides.items() if value is not None})
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"invalid config {path or '(defaults)'}:\n{e}") from e
