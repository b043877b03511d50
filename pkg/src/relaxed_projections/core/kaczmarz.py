from dataclasses import dataclass, field
import logging

import numpy as np

from relaxed_projections.core.engine import IterationTrace, Schedule, iterate
from relaxed_projections.core.errors import InconsistentBlockError, InputError
from relaxed_projections.core.linops import as_matrix, as_vector, least_squares
from relaxed_projections.core.subspaces import AffineSubspace, LinearSubspace, project_linear

CONSISTENCY_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """
    A linear system M x = b with a partition of its rows into blocks.

    Attributes:
        M (np.ndarray): p x q matrix.
        b (np.ndarray): Right-hand side of length p.
        blocks (tuple[tuple[int, ...], ...]): Nonempty row blocks covering
            0 ... p - 1 exactly once.
    """
    M: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        M = as_matrix(self.M)
        b = as_vector(self.b, M.shape[0])
        blocks = tuple(tuple(int(i) for i in block) for block in self.blocks)
        if any(len(block) == 0 for block in blocks):
            raise InputError("blocks must be nonempty")
        rows = sorted(i for block in blocks for i in block)
        if rows != list(range(M.shape[0])):
            raise InputError(f"blocks must cover rows 0..{M.shape[0] - 1} exactly once")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def singletons(cls, M, b) -> "BlockSystem":
        """Classical Kaczmarz: one hyperplane per row."""
        A = as_matrix(M)
        return cls(A, b, singleton_blocks(A.shape[0]))

    @property
    def shape(self) -> tuple[int, int]:
        return self.M.shape


@dataclass
class KaczmarzReport:
    """
    Outcome of a block Kaczmarz run.

    Attributes:
        trace (IterationTrace): The iteration.
        residuals (np.ndarray): ||M x_n - b|| per iterate.
        lsq_distance (np.ndarray): ||x_n - x_LS|| to the minimum-norm least-squares solution.
        consistent (bool): Whether M x = b is solvable.
        lsq_solution (np.ndarray): x_LS.
        lsq_residual (float): ||M x_LS - b||.
    """
    trace: IterationTrace
    residuals: np.ndarray
    lsq_distance: np.ndarray
    consistent: bool
    lsq_solution: np.ndarray = field(repr=False)
    lsq_residual: float = 0.0


def singleton_blocks(p: int) -> tuple[tuple[int, ...], ...]:
    return tuple((i,) for i in range(p))


def parse_blocks(spec: str, p: int) -> tuple[tuple[int, ...], ...]:
    """
    Parse a block partition such as "0,1;2;3,4" (0-based rows, blocks separated by ';').

    Raises:
        InputError: On malformed text or a partition that does not cover 0 ... p - 1 once.
    """
    blocks = []
    for chunk in spec.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            blocks.append(tuple(int(token) for token in chunk.split(",")))
        except ValueError as e:
            raise InputError(f"malformed block {chunk!r}: {e}") from e
    rows = sorted(i for block in blocks for i in block)
    if rows != list(range(p)):
        raise InputError(f"blocks {spec!r} do not partition rows 0..{p - 1}")
    return tuple(blocks)


def gaussian_instance(p: int, q: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """
    M with i.i.d. standard normal entries and unit-norm rows, b i.i.d. standard normal.

    Raises:
        InputError: If p < 1 or q < 1.
    """
    if p < 1 or q < 1:
        raise InputError(f"instance shape must be positive, got {p} x {q}")
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((p, q))
    M /= np.linalg.norm(M, axis=1, keepdims=True)
    b = rng.standard_normal(p)
    return M, b


def blocks_to_affine(sys: BlockSystem) -> list[AffineSubspace]:
    """
    One affine subspace {x : M_I x = b_I} per block.

    L_I = ker M_I, and a_I is the minimum-norm solution, which lies in the row
    space of M_I = L_I-perp, so (L_I, a_I) is canonical by construction.

    Raises:
        InconsistentBlockError: If some block subsystem has no solution.
    """
    collection = []
    for index, block in enumerate(sys.blocks):
        M_I = sys.M[list(block)]
        b_I = sys.b[list(block)]
        a_I, residual = least_squares(M_I, b_I)
        if residual > CONSISTENCY_RTOL * (1.0 + np.linalg.norm(b_I)):
            raise InconsistentBlockError(index, block, residual)
        L_I = LinearSubspace.kernel(M_I)
        # strip rounding so the translation is orthogonal to L_I to machine precision
        a_I = a_I - project_linear(L_I, a_I)
        collection.append(AffineSubspace(L_I, a_I))
    logging.debug(f"blocks_to_affine: {len(collection)} affine subspaces in R^{sys.shape[1]}")
    return collection


def solve(sys: BlockSystem, schedule: Schedule, x0, n_steps: int) -> KaczmarzReport:
    """
    Block Kaczmarz: iterate relaxed projections onto the block solution sets.

    Raises:
        InconsistentBlockError: From blocks_to_affine.
        InputError / NumericalAnomalyError: From iterate.
    """
    collection = blocks_to_affine(sys)
    trace = iterate(collection, schedule, x0, n_steps, store_iterates=True)
    x_ls, lsq_residual = least_squares(sys.M, sys.b)
    consistent = lsq_residual <= CONSISTENCY_RTOL * (1.0 + np.linalg.norm(sys.b))

    residuals = np.linalg.norm(trace.iterates @ sys.M.T - sys.b, axis=1)
    lsq_distance = np.linalg.norm(trace.iterates - x_ls, axis=1)
    logging.info(
        f"kaczmarz: {n_steps} {schedule.label} steps, lam={schedule.cap}, "
        f"final residual {residuals[-1]:.3e}, {'consistent' if consistent else 'inconsistent'} system"
    )
    return KaczmarzReport(trace, residuals, lsq_distance, bool(consistent), x_ls, float(lsq_residual))
