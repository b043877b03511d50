from collections.abc import Sequence
from dataclasses import dataclass, field
import logging

import numpy as np
from scipy import stats

from relaxed_projections.core.errors import InputError, NumericalAnomalyError
from relaxed_projections.core.linops import as_vector, least_squares, nullspace
from relaxed_projections.core.subspaces import AffineSubspace, LinearSubspace, RelaxedProjector, project_linear

RATE_FLOOR = 1e-13
"""float: Residuals at or below this are treated as converged and skipped by the rate estimate."""

FIX_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AffineMap:
    """
    The map x -> W x + v.

    Attributes:
        linear (np.ndarray): d x d matrix W.
        offset (np.ndarray): Vector v.
    """
    linear: np.ndarray
    offset: np.ndarray = field(repr=False)

    def __post_init__(self):
        W = np.asarray(self.linear, dtype=np.float64)
        v = np.asarray(self.offset, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1] or v.shape != (W.shape[0],):
            raise InputError(f"inconsistent affine map shapes {W.shape} and {v.shape}")
        object.__setattr__(self, "linear", W)
        object.__setattr__(self, "offset", v)

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(np.eye(dim), np.zeros(dim))

    @classmethod
    def of(cls, projector: RelaxedProjector) -> "AffineMap":
        return cls(projector.linear_matrix, projector.offset)

    @property
    def dim(self) -> int:
        return self.linear.shape[0]

    def __call__(self, x) -> np.ndarray:
        return self.linear @ as_vector(x, self.dim) + self.offset

    def then(self, other: "AffineMap") -> "AffineMap":
        """The map x -> other(self(x))."""
        return AffineMap(other.linear @ self.linear, other.linear @ self.offset + other.offset)

    def power_orbit(self, x0, n_steps: int) -> np.ndarray:
        """Rows Q^0 x0, ..., Q^n_steps x0."""
        x = as_vector(x0, self.dim)
        orbit = np.empty((n_steps + 1, self.dim))
        orbit[0] = x
        for n in range(n_steps):
            x = self.linear @ x + self.offset
            orbit[n + 1] = x
        return orbit


@dataclass(frozen=True, eq=False)
class FixedPointSet:
    """
    Fix Q = {x : (I - W) x = v}.

    Attributes:
        particular (np.ndarray): Minimum-norm least-squares solution x_p.
        directions (LinearSubspace): ker(I - W).
        consistent (bool): Whether (I - W) x = v is solvable within tolerance.
        residual (float): ||(I - W) x_p - v||.
    """
    particular: np.ndarray = field(repr=False)
    directions: LinearSubspace
    consistent: bool
    residual: float


def compose(projectors: Sequence[RelaxedProjector]) -> AffineMap:
    """
    The affine map R_k(...R_1(x)), projectors[0] applied first.

    Raises:
        InputError: On an empty list or mixed dimensions.
    """
    if not projectors:
        raise InputError("cannot compose an empty list of projectors")
    d = projectors[0].target.dim_ambient
    if any(R.target.dim_ambient != d for R in projectors):
        raise InputError("projectors live in different ambient dimensions")
    result = AffineMap.identity(d)
    for R in projectors:
        result = result.then(AffineMap.of(R))
    return result


def cyclic_map(collection: Sequence[AffineSubspace], lam: float, order: Sequence[int] | None = None) -> AffineMap:
    """Q = R_{A_{order[-1]},lam} ... R_{A_{order[0]},lam}; the default order is 0 ... ell - 1."""
    if order is None:
        order = range(len(collection))
    return compose([RelaxedProjector(collection[i], lam) for i in order])


def fixed_points(Q: AffineMap, tol: float | None = None) -> FixedPointSet:
    """
    Solve (I - W) x = v by minimum-norm least squares.

    Args:
        Q (AffineMap): The map.
        tol (float | None): Consistency tolerance on the residual, default
            1e-8 (1 + ||v||).
    Returns:
        FixedPointSet: The particular solution, ker(I - W) and the consistency flag.
    """
    if tol is None:
        tol = 1e-8 * (1.0 + np.linalg.norm(Q.offset))
    if tol <= 0:
        raise InputError(f"tol must be positive, got {tol}")
    system = np.eye(Q.dim) - Q.linear
    particular, residual = least_squares(system, Q.offset)
    directions = LinearSubspace(nullspace(system, tol=FIX_RANK_TOL, cols=Q.dim))
    consistent = bool(residual <= tol)
    if not consistent:
        logging.warning(f"fixed_points: (I - W) x = v inconsistent, residual {residual:.3e} > {tol:.3e}")
    logging.debug(f"fixed_points: dim Fix Q = {directions.dim}, residual {residual:.3e}")
    return FixedPointSet(particular, directions, consistent, float(residual))


def project_onto_fix(fps: FixedPointSet, x0) -> np.ndarray:
    """
    Nearest fixed point to x0: x_p + P_dir(x0 - x_p).

    Raises:
        NumericalAnomalyError: If the fixed-point set was flagged inconsistent.
    """
    if not fps.consistent:
        raise NumericalAnomalyError(f"Fix Q not found (residual {fps.residual:.3e}); cannot project onto it")
    x = as_vector(x0, fps.directions.dim_ambient)
    return fps.particular + project_linear(fps.directions, x - fps.particular)


def translation_orbit(Q: AffineMap, x0, y0, n_steps: int) -> np.ndarray:
    """
    Rows T^n (x0 - y0) + y0 for n = 0 ... n_steps, T the linear part of Q.

    For y0 in Fix Q these equal Q^n x0, since Q x - y0 = T (x - y0).
    """
    shift = as_vector(y0, Q.dim)
    return AffineMap(Q.linear, np.zeros(Q.dim)).power_orbit(as_vector(x0, Q.dim) - shift, n_steps) + shift


def linear_rate(Q: AffineMap, x0, x_star, n_steps: int) -> tuple[float, list[float]]:
    """
    Measured linear rate of Q^n x0 -> x_star.

    The rate is the geometric mean of consecutive residual ratios over the last
    half of the ratios whose residuals are both above RATE_FLOOR; it is 0 when
    no such ratio exists (x0 already fixed, or immediate convergence).

    Returns:
        tuple[float, list[float]]: The rate and residuals ||Q^n x0 - x_star||, n = 0 ... n_steps.
    Raises:
        InputError: If n_steps < 10.
    """
    if n_steps < 10:
        raise InputError(f"linear_rate needs n_steps >= 10, got {n_steps}")
    target = as_vector(x_star, Q.dim)
    residuals = np.linalg.norm(Q.power_orbit(x0, n_steps) - target, axis=1)

    valid = [
        residuals[n + 1] / residuals[n]
        for n in range(n_steps)
        if residuals[n] > RATE_FLOOR and residuals[n + 1] > RATE_FLOOR
    ]
    if not valid:
        return 0.0, residuals.tolist()
    tail = np.asarray(valid[len(valid) // 2:])
    rate = float(np.exp(np.mean(np.log(tail))))
    return rate, residuals.tolist()


def log_linear_fit(residuals: Sequence[float], floor: float = RATE_FLOOR) -> tuple[float, float]:
    """
    Least-squares line through log(residual_n) against n, over residuals above floor.

    Returns:
        tuple[float, float]: Slope (log of the per-step rate) and R^2.
    """
    values = np.asarray(residuals, dtype=np.float64)
    steps = np.nonzero(values > floor)[0]
    if steps.size < 3:
        raise InputError("need at least three residuals above the floor for a log-linear fit")
    fit = stats.linregress(steps, np.log(values[steps]))
    return float(fit.slope), float(fit.rvalue ** 2)
