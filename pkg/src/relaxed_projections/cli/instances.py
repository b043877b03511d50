from dataclasses import dataclass, field
from pathlib import Path
import logging

import numpy as np

from relaxed_projections.core.errors import InputError
from relaxed_projections.core.kaczmarz import BlockSystem, blocks_to_affine, gaussian_instance, singleton_blocks
from relaxed_projections.core.subspaces import AffineSubspace

SEPARATOR = "|"
COMMENT = "#"


@dataclass(frozen=True, eq=False)
class Instance:
    """
    A linear system read from (or written to) an instance file.

    Attributes:
        M (np.ndarray): p x q coefficient matrix.
        b (np.ndarray): Right-hand side of length p.
    """
    M: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.M.shape

    def system(self, blocks: tuple[tuple[int, ...], ...] | None = None) -> BlockSystem:
        """The block system; one hyperplane per row by default."""
        return BlockSystem(self.M, self.b, blocks if blocks is not None else singleton_blocks(self.M.shape[0]))

    def collection(self, blocks: tuple[tuple[int, ...], ...] | None = None) -> list[AffineSubspace]:
        return blocks_to_affine(self.system(blocks))


def _format_row(coeffs: np.ndarray, rhs: float) -> str:
    return " ".join(f"{v:.17g}" for v in coeffs) + f" {SEPARATOR} {rhs:.17g}"


def write_instance(path: Path, instance: Instance, comments: list[str] | None = None) -> Path:
    """Write rows "a_i1 ... a_iq | b_i" with 17 significant digits; '#' lines carry the comments."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{COMMENT} {c}" for c in comments or []]
    lines.extend(_format_row(row, rhs) for row, rhs in zip(instance.M, instance.b))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logging.info(f"Wrote instance {instance.shape[0]}x{instance.shape[1]} to {path}")
    return path


def read_instance(path: Path) -> Instance:
    """
    Parse an instance file.

    Blank lines and lines starting with '#' are skipped.

    Raises:
        InputError: Naming the file and line of the first malformed row, or if
            the file holds no equation.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read instance {path}: {e}") from e

    rows, rhs = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(COMMENT):
            continue
        left, sep, right = line.partition(SEPARATOR)
        if not sep:
            raise InputError(f"{path}:{lineno}: missing '{SEPARATOR}' between coefficients and right-hand side")
        try:
            coeffs = [float(token) for token in left.split()]
            value = float(right.strip())
        except ValueError as e:
            raise InputError(f"{path}:{lineno}: {e}") from e
        if not coeffs:
            raise InputError(f"{path}:{lineno}: no coefficients")
        if rows and len(coeffs) != len(rows[0]):
            raise InputError(f"{path}:{lineno}: expected {len(rows[0])} coefficients, got {len(coeffs)}")
        if not all(np.isfinite(coeffs)) or not np.isfinite(value):
            raise InputError(f"{path}:{lineno}: non-finite value")
        rows.append(coeffs)
        rhs.append(value)

    if not rows:
        raise InputError(f"{path}: no equations")
    logging.debug(f"read_instance: {len(rows)} equations in R^{len(rows[0])} from {path}")
    return Instance(np.array(rows), np.array(rhs))


def generate(p: int, q: int, seed: int) -> Instance:
    """Gaussian system with unit-norm rows, deterministic given the seed."""
    M, b = gaussian_instance(p, q, seed)
    return Instance(M, b)
