import json

from dimf.models.summary import CheckResult
from dimf.trace import ConvergenceTrace
from dimf.utils.io_utils import (
    atomic_write_text,
    format_float,
    read_flat_yaml,
    write_gauss_trace_csv,
    write_grid_trace_csv,
    write_model_json,
)


def test_gauss_csv_layout_and_clamping(tmp_path):
    trace = ConvergenceTrace(initial_kl=1.0)
    trace.append(kl_to_oracle=0.25, kl_step=0.5, wall_ms=1.5)
    trace.append(kl_to_oracle=1e-14, kl_step=1e-3, wall_ms=0.0)

    path = write_gauss_trace_csv(tmp_path / "run.csv", trace, threshold=1e-10)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "iter,kl_coupling_to_sb,kl_step,wall_ms"
    assert lines[1] == "0,0.25,0.5,1.5"
    assert lines[2] == "1,1e-10,0.001,0.0"


def test_grid_csv_layout(tmp_path):
    trace = ConvergenceTrace(initial_kl=1.0)
    trace.append(kl_to_oracle=0.1, kl_step=0.2, wall_ms=0.0, tv_to_oracle=0.05)
    lines = write_grid_trace_csv(tmp_path / "grid.csv", trace).read_text().splitlines()
    assert lines == ["iter,tv_to_oracle,kl_coupling_to_oracle,wall_ms", "0,0.05,0.1,0.0"]


def test_format_float_round_trips():
    for value in (0.1, 1e-300, 2.0 / 3.0, 123456.789):
        assert float(format_float(value)) == value


def test_atomic_write_replaces_and_leaves_no_temp_files(tmp_path):
    target = tmp_path / "nested" / "out.txt"
    atomic_write_text(target, "first")
    atomic_write_text(target, "second")
    assert target.read_text() == "second"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


def test_write_model_json(tmp_path):
    path = write_model_json(tmp_path / "check.json", CheckResult.of("demo", 1e-12, 1e-10, n=3))
    text = path.read_text()
    assert text.endswith("}\n")
    data = json.loads(text)
    assert data["passed"] is True
    assert data["details"] == {"n": 3}


def test_read_flat_yaml(tmp_path):
    assert read_flat_yaml(None) == {}
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    assert read_flat_yaml(empty) == {}

    path = tmp_path / "flat.yaml"
    path.write_text("eps: [1.0, 2.0]\nseed: 4\n")
    assert read_flat_yaml(path) == {"eps": [1.0, 2.0], "seed": 4}
