from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
import logging
import xml.etree.ElementTree as ET

import numpy as np

from relaxed_projections.cli.traces import TraceData, highlight_path, read_trace
from relaxed_projections.core.errors import InputError

PANEL_WIDTH = 360
PANEL_HEIGHT = 300
MARGIN = 30
TITLE_HEIGHT = 20
COLUMNS = 2
MARKER_RADIUS = 2.5

TRAJECTORY_STYLE = {"fill": "none", "stroke": "#1f77b4", "stroke-width": "0.6", "stroke-opacity": "0.7"}
HIGHLIGHT_STYLE = {"fill": "#d62728", "stroke": "none"}
START_STYLE = {"fill": "none", "stroke": "#2ca02c", "stroke-width": "1.5"}


@dataclass
class Panel:
    """
    One subplot: a trajectory and, optionally, its highlighted subsequence.

    Attributes:
        title (str): Caption above the panel.
        trace (TraceData): The trajectory.
        highlight (TraceData | None): Points drawn with a distinct marker.
    """
    title: str
    trace: TraceData
    highlight: TraceData | None = None


def _xy(data: TraceData) -> np.ndarray:
    # a one-dimensional trace is drawn against the step number
    if data.points.shape[1] == 1:
        return np.column_stack([data.steps.astype(np.float64), data.points[:, 0]])
    return data.points[:, :2]


def _num(v: float) -> str:
    return f"{v:.2f}"


# -------------------------
# Element helpers
# -------------------------

def svgroot(w: int, h: int) -> ET.Element:
    return ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        version="1.1",
        width=f"{w}px",
        height=f"{h}px",
        viewBox=f"0 0 {w} {h}",
    )


def svglinelist(parent: ET.Element, points: np.ndarray, style: dict[str, str]) -> ET.Element | None:
    """A path element joining the points in order."""
    if len(points) == 0:
        return None
    d = f"M{_num(points[0][0])} {_num(points[0][1])}" + "".join(f"L{_num(x)} {_num(y)}" for x, y in points[1:])
    return ET.SubElement(parent, "path", d=d, **style)


def svgmarkers(parent: ET.Element, points: np.ndarray, style: dict[str, str], radius: float = MARKER_RADIUS) -> ET.Element:
    group = ET.SubElement(parent, "g", **style)
    for x, y in points:
        ET.SubElement(group, "circle", cx=_num(x), cy=_num(y), r=_num(radius))
    return group


# -------------------------
# Layout
# -------------------------

class _Frame:
    """Maps data coordinates into a panel box, y axis pointing up."""

    def __init__(self, left: float, top: float, data: np.ndarray):
        self.left = left + MARGIN
        self.top = top + TITLE_HEIGHT + MARGIN / 2
        self.width = PANEL_WIDTH - 2 * MARGIN
        self.height = PANEL_HEIGHT - TITLE_HEIGHT - MARGIN
        lo = data.min(axis=0)
        hi = data.max(axis=0)
        span = np.where(hi - lo > 0, hi - lo, 1.0)
        self.lo = lo - 0.05 * span
        self.span = 1.1 * span

    def __call__(self, data: np.ndarray) -> np.ndarray:
        u = (data - self.lo) / self.span
        return np.column_stack([self.left + u[:, 0] * self.width, self.top + (1.0 - u[:, 1]) * self.height])

    def bounds_label(self) -> str:
        x0, y0 = self.lo
        x1, y1 = self.lo + self.span
        return f"x in [{x0:.3g}, {x1:.3g}], y in [{y0:.3g}, {y1:.3g}]"


def render(panels: Sequence[Panel], columns: int = COLUMNS) -> ET.Element:
    """
    Lay panels out row by row, `columns` per row (a single panel fills the figure).

    Raises:
        InputError: On an empty panel list, an empty trace or columns < 1.
    """
    if not panels:
        raise InputError("figure needs at least one trace")
    if columns < 1:
        raise InputError(f"columns must be >= 1, got {columns}")
    columns = min(columns, len(panels))
    rows = -(-len(panels) // columns)
    root = svgroot(columns * PANEL_WIDTH, rows * PANEL_HEIGHT)
    ET.SubElement(root, "rect", x="0", y="0", width=str(columns * PANEL_WIDTH), height=str(rows * PANEL_HEIGHT), fill="white")

    for index, panel in enumerate(panels):
        if len(panel.trace.steps) == 0:
            raise InputError(f"trace {panel.trace.source} has no rows")
        left = (index % columns) * PANEL_WIDTH
        top = (index // columns) * PANEL_HEIGHT
        data = _xy(panel.trace)
        extent = data if panel.highlight is None else np.vstack([data, _xy(panel.highlight)])
        frame = _Frame(left, top, extent)

        group = ET.SubElement(root, "g", id=f"panel-{index}")
        title = ET.SubElement(group, "text", x=_num(left + PANEL_WIDTH / 2), y=_num(top + TITLE_HEIGHT - 4),
                              **{"text-anchor": "middle", "font-family": "sans-serif", "font-size": "12"})
        title.text = panel.title
        ET.SubElement(group, "rect", x=_num(frame.left), y=_num(frame.top), width=_num(frame.width),
                      height=_num(frame.height), fill="none", stroke="#888888", **{"stroke-width": "0.5"})
        caption = ET.SubElement(group, "text", x=_num(frame.left), y=_num(frame.top + frame.height + 14),
                                **{"font-family": "sans-serif", "font-size": "9", "fill": "#555555"})
        caption.text = frame.bounds_label()

        svglinelist(group, frame(data), TRAJECTORY_STYLE)
        if panel.highlight is not None and len(panel.highlight.steps):
            svgmarkers(group, frame(_xy(panel.highlight)), HIGHLIGHT_STYLE)
        svgmarkers(group, frame(data[:1]), START_STYLE, radius=2 * MARKER_RADIUS)
    return root


def load_panels(trace_paths: Sequence[Path]) -> list[Panel]:
    """Read each trace and, when present, its sibling highlight file."""
    panels = []
    for path in trace_paths:
        path = Path(path)
        sibling = highlight_path(path)
        highlight = read_trace(sibling) if sibling.exists() else None
        panels.append(Panel(path.stem, read_trace(path), highlight))
    return panels


def write_svg(root: ET.Element, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ET.indent(root)
    ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)
    logging.info(f"Wrote figure to {path}")
    return path


def make_figure(trace_paths: Sequence[Path], out_path: Path, columns: int = COLUMNS) -> Path:
    return write_svg(render(load_panels(trace_paths), columns), out_path)
