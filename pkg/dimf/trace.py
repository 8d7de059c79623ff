from dataclasses import dataclass, field

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class TraceRecord:
    """State after one D-IMF iteration (index counted from 0)."""
    iteration: int
    kl_to_oracle: float
    kl_step: float
    wall_ms: float
    tv_to_oracle: float | None = None


@dataclass
class ConvergenceTrace:
    """Per-iteration KL-to-oracle and step-KL records of one D-IMF run."""
    initial_kl: float
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, kl_to_oracle: float, kl_step: float, wall_ms: float, tv_to_oracle: float | None = None) -> TraceRecord:
        record = TraceRecord(
            iteration=len(self.records),
            kl_to_oracle=float(kl_to_oracle),
            kl_step=float(kl_step),
            wall_ms=float(wall_ms),
            tv_to_oracle=None if tv_to_oracle is None else float(tv_to_oracle),
        )
        self.records.append(record)
        return record

    def __len__(self) -> int:
        return len(self.records)

    @property
    def kl_values(self) -> np.ndarray:
        return np.array([r.kl_to_oracle for r in self.records])

    @property
    def final_kl(self) -> float:
        return self.records[-1].kl_to_oracle if self.records else self.initial_kl

    def iterations_to_threshold(self, threshold: float) -> int | None:
        """Number of iterations until KL first drops below threshold, or None."""
        for record in self.records:
            if record.kl_to_oracle < threshold:
                return record.iteration + 1
        return None

    def is_monotone(self, slack: float = 1e-12) -> bool:
        values = np.concatenate([[self.initial_kl], self.kl_values])
        return bool(np.all(np.diff(values) <= slack))

    def fit_log_rate(self, threshold: float) -> tuple[float, float] | None:
        """
        Fit ln KL against the iteration index.

        Uses records after the first 10% of the run and before the first one
        under the threshold (where values get clamped).

        Args:
            threshold: Clamp level for KL values

        Returns:
            (slope, r_squared), or None when fewer than three points qualify
        """
        values = self.kl_values
        below = np.flatnonzero(values < threshold)
        stop = int(below[0]) if below.size else values.size
        start = int(np.ceil(0.1 * stop))

        idx = np.arange(start, stop)
        idx = idx[values[idx] > 0.0]
        if idx.size < 3:
            return None

        fit = stats.linregress(idx.astype(float), np.log(values[idx]))
        return float(fit.slope), float(fit.rvalue ** 2)
