class RelaxedProjectionError(Exception):
    """Base class for every error raised by relaxed_projections."""


class InputError(RelaxedProjectionError, ValueError):
    """
    Invalid input: dimension mismatch, empty collection, relaxation parameter
    out of range, out-of-range schedule index or malformed instance file.
    """


class InconsistentBlockError(InputError):
    """
    A Kaczmarz block M_I x = b_I has no solution, so its affine subspace is empty.

    Attributes:
        block_index (int): Position of the offending block in the partition.
        rows (tuple[int, ...]): Row indices of the block.
        residual (float): Least-squares residual of the block subsystem.
    """

    def __init__(self, block_index: int, rows: tuple[int, ...], residual: float):
        self.block_index = block_index
        self.rows = rows
        self.residual = residual
        super().__init__(
            f"block {block_index} (rows {list(rows)}) is inconsistent: "
            f"least-squares residual {residual:.3e}"
        )


class GuardExceededError(RelaxedProjectionError):
    """The subcollection enumeration would exceed the configured guard on ell."""

    def __init__(self, ell: int, guard: int, what: str):
        self.ell = ell
        self.guard = guard
        super().__init__(
            f"{what} enumerates subcollections of {ell} subspaces, above the guard of {guard}; "
            f"rerun with --guard-override {ell} to force it"
        )


class NumericalAnomalyError(RelaxedProjectionError, ArithmeticError):
    """NaN/Inf in an iterate, or a fixed-point set that should exist but was not found."""
