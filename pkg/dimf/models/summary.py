from typing import Dict, List, Optional, Union

from pydantic import BaseModel, computed_field, model_validator

from dimf.errors import ToleranceFailure
from dimf.models.config import ExperimentConfig
from dimf.types import ExperimentMode


class RunSummary(BaseModel):
    """Outcome of one Gaussian D-IMF run at a given (eps, N)."""
    eps: float
    n_inner: int
    dim: int
    max_iters: int
    iterations_executed: int
    iterations_to_threshold: Optional[int] = None
    reached_threshold: bool
    monotone: bool
    max_kl_increase: float
    log_kl_slope: Optional[float] = None
    log_kl_r2: Optional[float] = None
    final_kl: float
    final_process_kl: float
    final_correlation: Optional[float] = None  # only reported for dim == 1
    correlation_error: Optional[float] = None  # standard marginals only
    csv_file: str
    wall_ms: float

    @model_validator(mode="after")
    def check_threshold_count(self) -> "RunSummary":
        if self.iterations_to_threshold is not None and self.iterations_to_threshold > self.max_iters:
            raise ValueError(
                f"iterations_to_threshold {self.iterations_to_threshold} exceeds max_iters {self.max_iters}"
            )
        return self


class GridRunSummary(BaseModel):
    """Outcome of one grid D-IMF run at a given (eps, N)."""
    eps: float
    n_inner: int
    grid_points: int
    grid_d: int
    iterations_executed: int
    reached_tolerance: bool
    monotone: bool
    final_tv: float
    final_kl: float
    asymmetry: float
    discretization_gap: float
    pythagorean_markov_residual: float
    pythagorean_reciprocal_residual: float
    csv_file: str
    wall_ms: float


class CheckResult(BaseModel):
    name: str
    residual: float
    tolerance: float
    passed: bool
    details: Dict[str, Union[float, int, str]] = {}

    @classmethod
    def of(cls, name: str, residual: float, tolerance: float, **details) -> "CheckResult":
        residual = float(residual)
        return cls(name=name, residual=residual, tolerance=tolerance, passed=residual <= tolerance, details=details)


class SweepDiagnostics(BaseModel):
    """Sweep-level ratios and the worst log-KL fit."""
    eps_ratio: Optional[float] = None
    eps_ratio_n_inner: Optional[int] = None
    eps_ratio_pair: Optional[List[float]] = None
    n_saturation_ratio: Optional[float] = None
    min_log_kl_r2: Optional[float] = None
    runs_without_rate_fit: int = 0


class SweepSummary(BaseModel):
    """Contents of summary.json."""
    mode: ExperimentMode
    config: ExperimentConfig
    runs: List[RunSummary] = []
    grid_runs: List[GridRunSummary] = []
    checks: List[CheckResult] = []
    diagnostics: Optional[SweepDiagnostics] = None

    @computed_field
    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failed_checks(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def raise_for_failures(self) -> None:
        failed = self.failed_checks()
        if failed:
            names = ", ".join(f"{c.name} ({c.residual:.3e} > {c.tolerance:g})" for c in failed)
            raise ToleranceFailure(f"{len(failed)} check(s) failed: {names}")
