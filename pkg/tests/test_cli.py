from pathlib import Path
import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from relaxed_projections.cli.config import OUTPUT_ENV, ExperimentConfig, InstanceKind, InstanceSpec
from relaxed_projections.cli.instances import Instance, generate, read_instance, write_instance
from relaxed_projections.cli.main import EXIT_GUARD, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, main
from relaxed_projections.cli.traces import read_trace
from relaxed_projections.core.errors import InputError

SAMPLING = ["--samples", "500", "--validation-samples", "20000"]


def _write_rows(path: Path, rows: list[str]) -> Path:
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def _json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _data_rows(path: Path) -> int:
    return len(path.read_text(encoding="utf-8").splitlines()) - 1


@pytest.fixture
def lines_file(tmp_path):
    """x_1 = 2 and x_1 + x_2 = 1, meeting at (2, -1)."""
    return _write_rows(tmp_path / "lines.txt", ["# two lines", "1 0 | 2", "1 1 | 1"])


# -------------------------
# gen
# -------------------------

def test_gen_is_deterministic(tmp_path):
    assert main(["--out", str(tmp_path), "--seed", "42", "gen"]) == EXIT_OK
    path = tmp_path / "instance_p15_q10_s42.txt"
    rows = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    assert len(rows) == 15
    instance = read_instance(path)
    assert instance.shape == (15, 10)
    assert np.allclose(np.linalg.norm(instance.M, axis=1), 1.0)

    again = tmp_path / "again.txt"
    assert main(["--out", str(tmp_path), "--seed", "42", "gen", "--output", str(again)]) == EXIT_OK
    assert again.read_bytes() == path.read_bytes()


def test_instance_file_round_trip(tmp_path):
    original = generate(6, 4, seed=3)
    restored = read_instance(write_instance(tmp_path / "inst.txt", original, ["a comment"]))
    assert np.array_equal(restored.M, original.M)
    assert np.array_equal(restored.b, original.b)


@pytest.mark.parametrize(
    "rows, where",
    [
        (["1 0 | 1", "1 0 1"], ":2:"),
        (["1 0 | 1", "1 | 2"], ":2:"),
        (["# c", "1 x | 1"], ":2:"),
        (["| 1"], ":1:"),
        (["# only comments"], "no equations"),
    ],
)
def test_malformed_instance_names_the_line(tmp_path, rows, where):
    with pytest.raises(InputError, match=where):
        read_instance(_write_rows(tmp_path / "bad.txt", rows))


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["--seed", "1", "gen", "--p", "3", "--q", "2"]) == EXIT_OK
    assert (tmp_path / "env" / "instance_p3_q2_s1.txt").exists()
    assert main(["--out", str(tmp_path / "cli"), "--seed", "1", "gen", "--p", "3", "--q", "2"]) == EXIT_OK
    assert (tmp_path / "cli" / "instance_p3_q2_s1.txt").exists()


# -------------------------
# run
# -------------------------

def test_run_writes_six_traces(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["--out", str(out), "--seed", "42", "run", "--gaussian", "15", "10", "--highlight"]) == EXIT_OK
    summary = _json(out / "summary.json")
    assert len(summary["runs"]) == 6
    assert summary["subspaces"] == 15
    assert summary["lsq_residual"] > 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 6

    for lam in ("0.5", "1", "1.5"):
        for schedule in ("random", "cyclic"):
            path = out / f"trace_lam{lam}_{schedule}.csv"
            assert _data_rows(path) == 3001
            norms = read_trace(path).norms
            late, middle = norms[2000:].max(), norms[1000:2001].max()
            assert late <= 1.01 * middle
        highlight = out / f"trace_lam{lam}_cyclic_Q.csv"
        assert _data_rows(highlight) == 200
        assert not (out / f"trace_lam{lam}_random_Q.csv").exists()


def test_run_zero_steps(tmp_path):
    out = tmp_path / "run"
    assert main(["--out", str(out), "run", "--steps", "0", "--lambdas", "1.0", "--schedules", "cyclic"]) == EXIT_OK
    trace = read_trace(out / "trace_lam1_cyclic.csv")
    assert list(trace.steps) == [0]
    assert trace.norms[0] == 0.0


def test_run_is_reproducible(tmp_path):
    argv = ["--seed", "7", "--full-vectors", "run", "--gaussian", "8", "5", "--steps", "300", "--varying"]
    assert main(["--out", str(tmp_path / "a"), *argv]) == EXIT_OK
    assert main(["--out", str(tmp_path / "b"), *argv, "--jobs", "3"]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert read_trace(tmp_path / "a" / "trace_lam1_random_varying.csv").points.shape == (301, 5)


def test_run_with_certificate(tmp_path):
    square = _write_rows(tmp_path / "square.txt", ["1 0 | 1", "0 1 | 1"])
    out = tmp_path / "run"
    argv = ["--out", str(out), "run", "--instance", str(square), "--steps", "2000", "--certificate", "--x0", "5,-3"]
    assert main([*argv, *SAMPLING]) == EXIT_OK
    runs = _json(out / "summary.json")["runs"]
    assert all(run["within_bound"] for run in runs)
    assert all(run["bound"] > run["sup_norm"] for run in runs)


def test_run_from_config_file(tmp_path, lines_file):
    config = tmp_path / "experiment.json"
    config.write_text(json.dumps({
        "instance": {"kind": "explicit", "file": lines_file.name},
        "lambdas": [1.0],
        "schedules": ["cyclic"],
        "n_steps": 100,
        "highlight": True,
    }))
    out = tmp_path / "run"
    assert main(["--out", str(out), "run", "--config", str(config)]) == EXIT_OK
    trace = read_trace(out / "trace_lam1_cyclic.csv")
    assert np.allclose(trace.points[-1], [2.0, -1.0], atol=1e-6)
    assert _data_rows(out / "trace_lam1_cyclic_Q.csv") == 50


def test_config_rejects_unknown_keys(tmp_path):
    config = tmp_path / "experiment.json"
    config.write_text(json.dumps({"lambdas": [1.0], "colour": "red"}))
    with pytest.raises(InputError, match="colour"):
        ExperimentConfig.from_json(config)
    assert main(["--out", str(tmp_path), "run", "--config", str(config)]) == EXIT_INPUT


def test_config_overrides_win(tmp_path):
    config = tmp_path / "experiment.json"
    config.write_text(json.dumps({"n_steps": 10, "seed": 3}))
    loaded = ExperimentConfig.from_json(config, seed=9, guard=None, output_dir=tmp_path)
    assert loaded.seed == 9
    assert loaded.n_steps == 10
    assert loaded.instance.kind is InstanceKind.GAUSSIAN_HYPERPLANES
    assert loaded.output_dir == tmp_path


def test_instance_spec_validation(tmp_path):
    with pytest.raises(InputError):
        InstanceSpec(InstanceKind.EXPLICIT)
    with pytest.raises(InputError):
        InstanceSpec(InstanceKind.GAUSSIAN_HYPERPLANES, blocks="0;1")
    with pytest.raises(InputError):
        InstanceSpec(InstanceKind.GAUSSIAN_HYPERPLANES, p=0)
    assert InstanceSpec(InstanceKind.EXPLICIT, file=tmp_path / "lines.txt").stem == "lines"


# -------------------------
# figure
# -------------------------

def test_figure_from_run_directory(tmp_path):
    run = tmp_path / "run"
    assert main(["--out", str(run), "--seed", "1", "run", "--gaussian", "6", "4", "--steps", "120", "--highlight"]) == EXIT_OK
    assert main(["--out", str(tmp_path / "fig"), "figure", str(run)]) == EXIT_OK
    svg = tmp_path / "fig" / "figure.svg"
    root = ET.parse(svg).getroot()
    ns = {"svg": "http://www.w3.org/2000/svg"}
    panels = [g for g in root.findall("svg:g", ns) if g.get("id", "").startswith("panel-")]
    assert len(panels) == 6
    titles = [g.find("svg:text", ns).text for g in panels]
    assert titles[:2] == ["trace_lam0.5_random", "trace_lam0.5_cyclic"]
    highlighted = [g for g in panels if g.find("svg:g[@fill='#d62728']", ns) is not None]
    assert len(highlighted) == 3

    first = svg.read_bytes()
    assert main(["--out", str(tmp_path / "fig"), "figure", str(run)]) == EXIT_OK
    assert svg.read_bytes() == first


def test_figure_single_trace(tmp_path, lines_file):
    run = tmp_path / "run"
    argv = ["--out", str(run), "run", "--instance", str(lines_file), "--lambdas", "1.0", "--schedules", "cyclic"]
    assert main([*argv, "--steps", "20"]) == EXIT_OK
    out = tmp_path / "one.svg"
    assert main(["figure", str(run / "trace_lam1_cyclic.csv"), "--output", str(out)]) == EXIT_OK
    text = out.read_text(encoding="utf-8")
    assert 'width="360px"' in text
    assert 'id="panel-1"' not in text


def test_figure_errors(tmp_path):
    bad = _write_rows(tmp_path / "bad.csv", ["step,x_1,norm", "0,abc,1"])
    assert main(["--out", str(tmp_path), "figure", str(bad)]) == EXIT_INPUT
    assert main(["--out", str(tmp_path), "figure", str(tmp_path / "missing.csv")]) == EXIT_INPUT
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["--out", str(tmp_path), "figure", str(empty)]) == EXIT_INPUT


# -------------------------
# bound, kappa, kaczmarz, fixpoint
# -------------------------

def test_bound_single_hyperplane(tmp_path, capsys):
    hyperplane = _write_rows(tmp_path / "plane.txt", ["1 0 | 2"])
    assert main(["--out", str(tmp_path), "bound", "--instance", str(hyperplane), "--lam", "0.5"]) == EXIT_OK
    payload = _json(tmp_path / "plane_bound.json")
    assert payload["C"] == pytest.approx(4.0)
    assert payload["ell"] == 1
    assert payload["ledger"] == [{"members": [0], "C": pytest.approx(4.0)}]
    assert "C        = 4" in capsys.readouterr().out


def test_bound_through_origin_is_zero(tmp_path):
    hyperplane = _write_rows(tmp_path / "origin.txt", ["1 0 | 0"])
    assert main(["--out", str(tmp_path), "bound", "--instance", str(hyperplane), "--lam", "1.5"]) == EXIT_OK
    assert _json(tmp_path / "origin_bound.json")["C"] == 0.0


def test_bound_guard_exit_code(tmp_path):
    assert main(["--out", str(tmp_path), "bound", "--gaussian", "15", "10", "--lam", "1.0"]) == EXIT_GUARD


def test_kappa_of_perpendicular_lines(tmp_path):
    square = _write_rows(tmp_path / "square.txt", ["1 0 | 1", "0 1 | 1"])
    assert main(["--out", str(tmp_path), "kappa", "--instance", str(square), *SAMPLING]) == EXIT_OK
    payload = _json(tmp_path / "square_kappa.json")
    assert payload["kappa"] == pytest.approx(math.sqrt(2), rel=0.02)
    assert payload["kappa_star"] == pytest.approx(math.sqrt(2), rel=0.02)
    assert payload["method"] == "empirical"


def test_kappa_theta_sweep(tmp_path):
    assert main(["--out", str(tmp_path), "kappa", "--theta-sweep", *SAMPLING]) == EXIT_OK
    rows = _json(tmp_path / "theta_sweep.json")["rows"]
    assert [row["theta"] for row in rows] == pytest.approx([math.pi / 2, math.pi / 4, math.pi / 8, math.pi / 16])
    kappas = [row["kappa"] for row in rows]
    assert kappas == sorted(kappas)
    for row in rows:
        assert row["kappa"] == pytest.approx(row["closed_form"], rel=0.02)


def test_kaczmarz_consistent_system(tmp_path, rng):
    M = rng.standard_normal((5, 3))
    x_true = rng.standard_normal(3)
    path = write_instance(tmp_path / "consistent.txt", Instance(M, M @ x_true))
    assert main(["--out", str(tmp_path), "kaczmarz", "--instance", str(path)]) == EXIT_OK
    payload = _json(tmp_path / "kaczmarz_consistent_cyclic.json")
    assert payload["consistent"]
    assert payload["final_residual"] <= 1e-8
    assert _data_rows(tmp_path / payload["csv"]) == 10_001


def test_kaczmarz_inconsistent_blocks(tmp_path):
    path = _write_rows(tmp_path / "clash.txt", ["1 0 | 0", "1 0 | 2", "0 1 | 1"])
    assert main(["--out", str(tmp_path), "kaczmarz", "--instance", str(path), "--blocks", "0,1;2"]) == EXIT_INPUT
    assert main(["--out", str(tmp_path), "kaczmarz", "--instance", str(path), "--steps", "500"]) == EXIT_OK
    payload = _json(tmp_path / "kaczmarz_clash_cyclic.json")
    assert not payload["consistent"]
    assert payload["final_residual"] >= payload["lsq_residual"] - 1e-6


def test_fixpoint_of_two_lines(tmp_path, lines_file):
    assert main(["--out", str(tmp_path), "fixpoint", "--instance", str(lines_file), "--x0", "10,10"]) == EXIT_OK
    payload = _json(tmp_path / "lines_fixpoint.json")
    assert payload["consistent"]
    assert payload["fix_dim"] == 0
    assert payload["x_star"] == pytest.approx([2.0, -1.0])
    assert payload["rate"] < 1.0
    assert payload["final_distance"] < 1e-8


# -------------------------
# Exit codes
# -------------------------

@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--lambdas", "2.5"],
        ["run", "--steps", "-1"],
        ["run", "--x0", "1,2"],
        ["run", "--x0", "1,a"],
        ["run", "--gaussian", "4", "3", "--blocks", "0;1;2;3"],
        ["bound", "--instance", "missing.txt", "--lam", "1.0"],
        ["bound", "--lam", "2.0", "--gaussian", "2", "2"],
        ["nonsense"],
        ["--verbose", "--quiet", "gen"],
    ],
)
def test_invalid_input_exit_code(tmp_path, argv):
    assert main(["--out", str(tmp_path), *argv]) == EXIT_INPUT


@pytest.mark.parametrize(
    "command",
    [
        ["gen", "--p", "3", "--q", "2"],
        ["run", "--gaussian", "3", "2", "--steps", "5", "--schedules", "cyclic"],
    ],
)
def test_unwritable_output_exit_code(tmp_path, command):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    assert main(["--out", str(blocker / "sub"), *command]) == EXIT_INPUT


def test_overflow_exit_code(tmp_path, lines_file):
    argv = ["--out", str(tmp_path), "run", "--instance", str(lines_file), "--x0", "1e308,1e308", "--steps", "1"]
    assert main(argv) == EXIT_NUMERICAL
