import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import yaml
from pydantic import BaseModel

from dimf.errors import ConfigError
from dimf.trace import ConvergenceTrace

GAUSS_CSV_HEADER = ["iter", "kl_coupling_to_sb", "kl_step", "wall_ms"]
GRID_CSV_HEADER = ["iter", "tv_to_oracle", "kl_coupling_to_oracle", "wall_ms"]


def atomic_write_text(path: Path, text: str) -> Path:
    """
    Write text next to its destination, then rename it into place.

    Readers never observe a partially written file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def format_float(value: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(value))


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    return buffer.getvalue()


def write_gauss_trace_csv(path: Path, trace: ConvergenceTrace, threshold: float) -> Path:
    """One row per D-IMF iteration; KL to the oracle is clamped from below at threshold."""
    rows = (
        (r.iteration, max(r.kl_to_oracle, threshold), r.kl_step, r.wall_ms)
        for r in trace.records
    )
    return atomic_write_text(path, render_csv(GAUSS_CSV_HEADER, rows))


def write_grid_trace_csv(path: Path, trace: ConvergenceTrace) -> Path:
    rows = (
        (r.iteration, r.tv_to_oracle, r.kl_to_oracle, r.wall_ms)
        for r in trace.records
    )
    return atomic_write_text(path, render_csv(GRID_CSV_HEADER, rows))


def write_model_json(path: Path, model: BaseModel) -> Path:
    return atomic_write_text(path, model.model_dump_json(indent=2) + "\n")


def read_flat_yaml(path: Optional[Path]) -> Dict[str, Any]:
    """
    Read a flat YAML mapping of scalars and lists of scalars.

    Args:
        path: Config file; None means an empty mapping

    Returns:
        The parsed mapping

    Raises:
        ConfigError: unreadable file, invalid YAML, non-mapping document or nested values
    """
    if path is None:
        return {}

    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML: {e}") from e

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping, got {type(data).__name__}")

    for key, value in data.items():
        items: List[Any] = value if isinstance(value, list) else [value]
        if any(isinstance(item, (dict, list)) for item in items):
            raise ConfigError(f"config key '{key}' must be a scalar or a list of scalars")
    return data
