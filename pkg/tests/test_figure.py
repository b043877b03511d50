import xml.etree.ElementTree as ET

import numpy as np
import pytest

from relaxed_projections.cli.figure import PANEL_HEIGHT, PANEL_WIDTH, Panel, make_figure, render
from relaxed_projections.cli.traces import (
    TraceData,
    highlight_path,
    read_trace,
    write_highlight,
    write_trace,
)
from relaxed_projections.core.engine import LambdaRule, Schedule, iterate
from relaxed_projections.core.errors import InputError
from relaxed_projections.core.subspaces import canonicalize_affine

SVG = "{http://www.w3.org/2000/svg}"


def _square_trace(n_steps=12, x0=(3.0, -2.0)):
    lines = [canonicalize_affine([1.0, 0.0], [np.array([0.0, 1.0])]), canonicalize_affine([0.0, 1.0], [np.array([1.0, 0.0])])]
    return iterate(lines, Schedule.cyclic(LambdaRule.fixed(1.5)), x0, n_steps)


def _data(n: int, dim: int = 2) -> TraceData:
    steps = np.arange(n)
    points = np.column_stack([np.cos(steps), np.sin(steps)])[:, :dim]
    return TraceData(steps, points, np.linalg.norm(points, axis=1), "synthetic")


# -------------------------
# Trace files
# -------------------------

def test_trace_csv_layout(tmp_path):
    trace = _square_trace()
    path = write_trace(tmp_path / "t.csv", trace)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,chosen_index,lambda,x_1,x_2,norm"
    assert lines[1].startswith("0,,,3,-2,")
    assert lines[2].startswith("1,0,1.5,")
    assert len(lines) == 14

    data = read_trace(path)
    assert np.array_equal(data.steps, np.arange(13))
    assert np.array_equal(data.points, trace.iterates)
    assert np.array_equal(data.norms, trace.norms)


def test_trace_csv_keeps_two_coordinates_unless_asked(tmp_path, random_collection):
    trace = iterate(random_collection(5, 2), Schedule.cyclic(LambdaRule.fixed(1.0)), np.ones(5), 4)
    assert read_trace(write_trace(tmp_path / "short.csv", trace)).points.shape == (5, 2)
    assert read_trace(write_trace(tmp_path / "full.csv", trace, full_vectors=True)).points.shape == (5, 5)


def test_norms_only_trace_cannot_be_written(tmp_path):
    trace = _square_trace()
    trace.iterates = None
    with pytest.raises(InputError):
        write_trace(tmp_path / "t.csv", trace)


def test_highlight_file(tmp_path):
    trace = _square_trace(n_steps=11)
    path = write_highlight(highlight_path(tmp_path / "t.csv"), trace, 2)
    assert path.name == "t_Q.csv"
    data = read_trace(path)
    assert list(data.steps) == [2, 4, 6, 8, 10]
    assert np.array_equal(data.points, trace.iterates[2::2])


@pytest.mark.parametrize(
    "text, where",
    [
        ("", ":1:"),
        ("a,b\n1,2\n", ":1:"),
        ("step,x_1,norm\n0,1,1\n1,2\n", ":3:"),
        ("step,x_1,norm\n0,abc,1\n", ":2:"),
    ],
)
def test_malformed_trace_names_the_line(tmp_path, text, where):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(InputError, match=where):
        read_trace(path)


# -------------------------
# Rendering
# -------------------------

def test_single_panel_fills_the_figure():
    root = render([Panel("one", _data(20))])
    assert root.get("width") == f"{PANEL_WIDTH}px"
    assert root.get("height") == f"{PANEL_HEIGHT}px"
    assert len(root.findall("g")) == 1


def test_six_panels_in_two_columns():
    panels = [Panel(f"p{i}", _data(30), _data(5) if i % 2 else None) for i in range(6)]
    root = render(panels)
    assert root.get("width") == f"{2 * PANEL_WIDTH}px"
    assert root.get("height") == f"{3 * PANEL_HEIGHT}px"
    groups = root.findall("g")
    assert [g.get("id") for g in groups] == [f"panel-{i}" for i in range(6)]
    assert [g.find("text").text for g in groups] == [f"p{i}" for i in range(6)]
    for i, group in enumerate(groups):
        marker_groups = group.findall("g")
        # highlight markers (odd panels) plus the start marker
        assert len(marker_groups) == (2 if i % 2 else 1)
    assert len(groups[1].findall("g")[0].findall("circle")) == 5


def test_one_dimensional_trace_is_drawn_against_steps():
    root = render([Panel("line", _data(10, dim=1))])
    path = root.find("g").find("path")
    assert path.get("d").startswith("M")
    assert path.get("d").count("L") == 9


def test_render_rejects_bad_input():
    with pytest.raises(InputError):
        render([])
    with pytest.raises(InputError):
        render([Panel("empty", _data(0))])
    with pytest.raises(InputError):
        render([Panel("p", _data(3))], columns=0)


def test_make_figure_is_deterministic(tmp_path):
    trace = _square_trace(n_steps=40)
    csv_path = write_trace(tmp_path / "trace.csv", trace)
    write_highlight(highlight_path(csv_path), trace, 2)
    first = make_figure([csv_path], tmp_path / "a.svg").read_bytes()
    second = make_figure([csv_path], tmp_path / "b.svg").read_bytes()
    assert first == second

    root = ET.fromstring(first)
    assert root.tag == f"{SVG}svg"
    panel = root.find(f"{SVG}g")
    assert panel.find(f"{SVG}text").text == "trace"
    assert len(panel.findall(f"{SVG}g")) == 2
