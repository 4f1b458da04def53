import csv
import json

import pytest

from risuav.cli import load_solution, main, reevaluate
from risuav.orchestrator import TRACE_FIELDS, IterationTrace
from risuav.scenario import default_paper_scenario, serialize_config


@pytest.fixture
def small_cfg(tmp_path):
    cfg = default_paper_scenario().replace(users=((300.0, 300.0), (-300.0, -300.0)), num_slots=4)
    path = tmp_path / "small.yaml"
    path.write_text(serialize_config(cfg))
    return path


def test_run_writes_artifacts(tmp_path, small_cfg, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(small_cfg), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert names == {"trace.csv", "solution.json", "trajectory.svg", "convergence.svg"}
    doc = load_solution(out / "solution.json")
    assert doc["schema_version"] == 1
    assert reevaluate(doc)[1] == pytest.approx(doc["gamma"], rel=1e-12)
    trace = IterationTrace.read_csv(out / "trace.csv")
    assert trace.gammas[-1] == doc["gamma"]


def test_svg_and_solution_are_byte_stable(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "--config", str(small_cfg), "--out", str(d), "--seed", "3"]) == 0
    for name in ("trajectory.svg", "convergence.svg", "solution.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_baseline_command(tmp_path, small_cfg):
    out = tmp_path / "af"
    assert main(["baseline", "--config", str(small_cfg), "--out", str(out)]) == 0
    doc = load_solution(out / "solution.json")
    assert doc["link"] == "af"
    assert reevaluate(doc)[1] == pytest.approx(doc["gamma"], rel=1e-12)


@pytest.mark.slow
def test_scheme_two_same_trace_schema(tmp_path, small_cfg):
    out = tmp_path / "s2"
    assert main(["run", "--config", str(small_cfg), "--scheme", "II", "--out", str(out)]) == 0
    with open(out / "trace.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert len(header) == len(TRACE_FIELDS)
    assert load_solution(out / "solution.json")["scheme"] == 2


def test_corrupt_config_leaves_nothing(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("users: [[1, 2\n")
    out = tmp_path / "never"
    code = main(["run", "--config", str(bad), "--out", str(out)])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config"
    assert not out.exists()
    assert not any(p.name.startswith(".risuav-") for p in tmp_path.iterdir())


def test_usage_errors(capsys):
    assert main(["sweep", "--axis", "H", "--values", "1,nan"]) == 2
    assert json.loads(capsys.readouterr().err.strip())["error"] == "usage"
    assert main(["run", "--scheme", "3"]) == 2
    assert main(["sweep", "--axis", "H", "--values", "50", "--jobs", "0"]) == 2


def test_sweep_records_failed_points(tmp_path, small_cfg, capsys):
    out = tmp_path / "sw"
    code = main(["sweep", "--config", str(small_cfg), "--axis", "M", "--values", "4,6.5",
                 "--jobs", "2", "--out", str(out)])
    assert code == 0
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["status"] for r in rows] == ["ok", "error"]
    assert "integer" in rows[1]["error"]
    assert float(rows[0]["gamma_bit_per_s_hz_w"]) > 0
    assert (out / "sweep_M.svg").exists()
    assert json.loads(capsys.readouterr().out.strip())["failed"] == 1
