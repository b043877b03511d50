import csv
from dataclasses import dataclass, field
from pathlib import Path
import logging

import numpy as np

from relaxed_projections.core.engine import IterationTrace, cyclic_subsequence
from relaxed_projections.core.errors import InputError

PLOTTED_COORDINATES = 2
"""int: Coordinates written per iterate unless full vectors are requested."""

HIGHLIGHT_SUFFIX = "_Q"


@dataclass
class TraceData:
    """
    Contents of a trace CSV, as read back for plotting.

    Attributes:
        steps (np.ndarray): Step numbers.
        points (np.ndarray): n x k coordinates (k >= 1).
        norms (np.ndarray): ||x_n|| per row.
        source (str): File the data came from.
    """
    steps: np.ndarray
    points: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)
    source: str = ""


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _coordinate_header(n_coords: int) -> list[str]:
    return [f"x_{i + 1}" for i in range(n_coords)]


def write_trace(path: Path, trace: IterationTrace, full_vectors: bool = False) -> Path:
    """
    One row per iterate: step, chosen_index, lambda, coordinates, norm.

    The row of step n carries the index and lambda of the step that produced
    x_n, so both are blank on the step 0 row.

    Raises:
        InputError: If the trace does not keep its iterates.
    """
    if trace.iterates is None:
        raise InputError("cannot write a CSV for a norms-only trace")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = trace.iterates.shape[1]
    n_coords = d if full_vectors else min(d, PLOTTED_COORDINATES)

    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["step", "chosen_index", "lambda", *_coordinate_header(n_coords), "norm"])
        for n, x in enumerate(trace.iterates):
            if n == 0:
                index, lam = "", ""
            else:
                index, lam = str(int(trace.chosen_indices[n - 1])), _fmt(trace.lambdas[n - 1])
            writer.writerow([n, index, lam, *(_fmt(v) for v in x[:n_coords]), _fmt(trace.norms[n])])
    logging.info(f"Wrote trace with {trace.n_steps + 1} rows to {path}")
    return path


def highlight_path(trace_path: Path) -> Path:
    """The sibling file holding the Q^k x_0 subsequence of a trace CSV."""
    trace_path = Path(trace_path)
    return trace_path.with_name(f"{trace_path.stem}{HIGHLIGHT_SUFFIX}{trace_path.suffix}")


def write_highlight(path: Path, trace: IterationTrace, period: int, full_vectors: bool = False) -> Path:
    """Rows k, step, coordinates, norm of x_{k * period} = Q^k x_0 for k = 1 ... N // period."""
    subsequence = cyclic_subsequence(trace, period)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = subsequence.shape[1]
    n_coords = d if full_vectors else min(d, PLOTTED_COORDINATES)

    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["k", "step", *_coordinate_header(n_coords), "norm"])
        for k, x in enumerate(subsequence, start=1):
            writer.writerow([k, k * period, *(_fmt(v) for v in x[:n_coords]), _fmt(np.linalg.norm(x))])
    logging.info(f"Wrote {len(subsequence)} highlighted iterates to {path}")
    return path


def read_trace(path: Path) -> TraceData:
    """
    Read a trace or highlight CSV back.

    The step column is "step"; coordinates are the x_i columns.

    Raises:
        InputError: On a missing file, a header without step/x_1/norm columns or
            a malformed row (the message names the line).
    """
    path = Path(path)
    try:
        f = path.open(newline="", encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read trace {path}: {e}") from e

    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}:1: empty trace file")
        coord_cols = [i for i, name in enumerate(header) if name.startswith("x_")]
        if "step" not in header or "norm" not in header or not coord_cols:
            raise InputError(f"{path}:1: header must contain step, x_1 and norm columns")
        step_col, norm_col = header.index("step"), header.index("norm")

        steps, points, norms = [], [], []
        for row in reader:
            lineno = reader.line_num
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                steps.append(int(row[step_col]))
                points.append([float(row[i]) for i in coord_cols])
                norms.append(float(row[norm_col]))
            except ValueError as e:
                raise InputError(f"{path}:{lineno}: {e}") from e

    return TraceData(
        steps=np.array(steps, dtype=np.int64),
        points=np.array(points, dtype=np.float64).reshape(len(points), len(coord_cols)),
        norms=np.array(norms, dtype=np.float64),
        source=str(path),
    )
