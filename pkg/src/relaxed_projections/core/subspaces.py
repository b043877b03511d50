from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from relaxed_projections.core.errors import InputError
from relaxed_projections.core.linops import (
    DEFAULT_RANK_RTOL,
    as_matrix,
    as_vector,
    least_squares,
    nullspace,
    orthonormalize,
)

ORTHONORMAL_TOL = 1e-10
CANONICAL_TOL = 1e-10
INTERSECT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LinearSubspace:
    """
    A closed linear subspace L of R^d, stored as an orthonormal basis.

    Attributes:
        basis (np.ndarray): d x k matrix with orthonormal columns. k = 0 is the
            zero subspace and k = d the whole space.
    """
    basis: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=np.float64)
        if B.ndim != 2 or B.shape[0] < 1 or B.shape[1] > B.shape[0]:
            raise InputError(f"basis must be a d x k matrix with k <= d, got shape {B.shape}")
        gram = B.T @ B
        if B.shape[1] and np.max(np.abs(gram - np.eye(B.shape[1]))) > ORTHONORMAL_TOL:
            raise InputError("basis columns are not orthonormal")
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)

    # -------------------------
    # Constructors
    # -------------------------

    @classmethod
    def span(cls, vectors: Sequence, dim: int, tol: float = DEFAULT_RANK_RTOL) -> "LinearSubspace":
        return cls(orthonormalize(vectors, tol=tol, dim=dim))

    @classmethod
    def zero(cls, dim: int) -> "LinearSubspace":
        return cls(np.zeros((dim, 0)))

    @classmethod
    def full(cls, dim: int) -> "LinearSubspace":
        return cls(np.eye(dim))

    @classmethod
    def kernel(cls, M, tol: float = DEFAULT_RANK_RTOL) -> "LinearSubspace":
        """The subspace {x : M x = 0}."""
        A = np.asarray(M, dtype=np.float64)
        return cls(nullspace(A, tol=tol, cols=A.shape[-1]))

    # -------------------------
    # Properties
    # -------------------------

    @property
    def dim_ambient(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @cached_property
    def projector(self) -> np.ndarray:
        """The d x d matrix of P_L."""
        P = self.basis @ self.basis.T
        P.setflags(write=False)
        return P

    @cached_property
    def complement_projector(self) -> np.ndarray:
        """The d x d matrix of P_{L-perp} = Id - P_L."""
        P = np.eye(self.dim_ambient) - self.projector
        P.setflags(write=False)
        return P

    def orthogonal_complement(self) -> "LinearSubspace":
        if self.dim == 0:
            return LinearSubspace.full(self.dim_ambient)
        return LinearSubspace(nullspace(self.basis.T, cols=self.dim_ambient))

    def contains(self, other: "LinearSubspace", tol: float = INTERSECT_TOL) -> bool:
        """True if `other` is a subspace of self (up to tol)."""
        if other.dim == 0:
            return True
        residual = other.basis - self.projector @ other.basis
        return bool(np.max(np.abs(residual)) <= tol)

    def same_as(self, other: "LinearSubspace", tol: float = INTERSECT_TOL) -> bool:
        return self.dim == other.dim and self.contains(other, tol)

    def __repr__(self) -> str:
        return f"LinearSubspace(d={self.dim_ambient}, k={self.dim})"


@dataclass(frozen=True, eq=False)
class AffineSubspace:
    """
    A = a + L in canonical form, i.e. with the translation a in L-perp.

    Attributes:
        direction (LinearSubspace): The parallel space L = A - A.
        translation (np.ndarray): The canonical translation a = P_{L-perp}(A),
            the point of A closest to the origin.
    """
    direction: LinearSubspace
    translation: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = as_vector(self.translation, self.direction.dim_ambient)
        leak = np.linalg.norm(self.direction.projector @ a)
        if leak > CANONICAL_TOL * (1.0 + np.linalg.norm(a)):
            raise InputError(
                f"translation is not orthogonal to the direction (||P_L a|| = {leak:.3e}); "
                "build it with canonicalize_affine"
            )
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "translation", a)

    @classmethod
    def linear(cls, direction: LinearSubspace) -> "AffineSubspace":
        return cls(direction, np.zeros(direction.dim_ambient))

    @property
    def dim_ambient(self) -> int:
        return self.direction.dim_ambient

    @property
    def is_linear(self) -> bool:
        return not np.any(self.translation)

    def __repr__(self) -> str:
        return (
            f"AffineSubspace(d={self.dim_ambient}, k={self.direction.dim}, "
            f"||a||={np.linalg.norm(self.translation):.6g})"
        )


@dataclass(frozen=True)
class RelaxedProjector:
    """
    The relaxed projector R_{A,lam} = (1 - lam) Id + lam P_A.

    Attributes:
        target (AffineSubspace): The affine subspace A.
        lam (float): Relaxation parameter in [0, 2]; lam = 1 is the projector
            and lam = 2 the reflector.
    """
    target: AffineSubspace
    lam: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 2.0:
            raise InputError(f"relaxation parameter must lie in [0, 2], got {self.lam}")

    @property
    def linear_matrix(self) -> np.ndarray:
        """Matrix of the linear part R_{L,lam} = (1 - lam) Id + lam P_L."""
        d = self.target.dim_ambient
        return (1.0 - self.lam) * np.eye(d) + self.lam * self.target.direction.projector

    @property
    def offset(self) -> np.ndarray:
        """Constant part lam * a, so that R_{A,lam} x = R_{L,lam} x + lam * a."""
        return self.lam * self.target.translation

    def __call__(self, x) -> np.ndarray:
        return apply_relaxed(self, x)


# -------------------------
# Operations
# -------------------------

def project_linear(L: LinearSubspace, x) -> np.ndarray:
    """P_L x = B (B^T x)."""
    v = as_vector(x, L.dim_ambient)
    return L.basis @ (L.basis.T @ v)


def distance(L: LinearSubspace, x) -> float:
    """d_L(x) = ||x - P_L x||."""
    v = as_vector(x, L.dim_ambient)
    return float(np.linalg.norm(v - L.basis @ (L.basis.T @ v)))


def project_affine(A: AffineSubspace, x) -> np.ndarray:
    """
    Nearest point of A to x, i.e. a + P_L x (valid because a is orthogonal to L).
    """
    return A.translation + project_linear(A.direction, x)


def apply_relaxed(R: RelaxedProjector, x) -> np.ndarray:
    """(1 - lam) x + lam P_A x."""
    v = as_vector(x, R.target.dim_ambient)
    return (1.0 - R.lam) * v + R.lam * project_affine(R.target, v)


def sine_cosine(L: LinearSubspace, x) -> tuple[float, float]:
    """
    Sine and cosine of the angle between x and its projection P_L x.

    The zero vector has sine 0 and cosine 1. A nonzero x orthogonal to L has
    sine 1 and cosine 0.
    """
    v = as_vector(x, L.dim_ambient)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return 0.0, 1.0
    p = L.basis @ (L.basis.T @ v)
    cos = min(np.linalg.norm(p) / norm, 1.0)
    sin = min(np.linalg.norm(v - p) / norm, 1.0)
    return float(sin), float(cos)


def intersect(subspaces: Sequence[LinearSubspace], tol: float = INTERSECT_TOL) -> LinearSubspace:
    """
    Intersection of linear subspaces as the kernel of the stacked complement projectors.

    A vector v lies in every L_i iff (Id - P_{L_i}) v = 0 for all i, so the
    intersection is the nullspace of the vertically stacked complement projectors.

    Raises:
        InputError: If the list is empty or dimensions differ.
    """
    if not subspaces:
        raise InputError("cannot intersect an empty list of subspaces")
    d = subspaces[0].dim_ambient
    if any(L.dim_ambient != d for L in subspaces):
        raise InputError("subspaces live in different ambient dimensions")
    if len(subspaces) == 1:
        return subspaces[0]

    stacked = np.vstack([L.complement_projector for L in subspaces])
    # singular values of the stack are at most sqrt(len) so an absolute tol works
    basis = nullspace(stacked, tol=tol / np.sqrt(len(subspaces)), cols=d)
    return LinearSubspace(basis)


def canonicalize_affine(point, spanning: Sequence, tol: float = DEFAULT_RANK_RTOL) -> AffineSubspace:
    """
    Build A = point + span(spanning) in canonical form (L, a) with a = point - P_L(point).

    Raises:
        InputError: On dimension mismatch.
    """
    p = as_vector(point)
    L = LinearSubspace.span(spanning, dim=p.shape[0], tol=tol)
    a = p - project_linear(L, p)
    # second pass removes the rounding left in P_L a
    a = a - project_linear(L, a)
    return AffineSubspace(L, a)


def affine_from_equations(M, b) -> AffineSubspace:
    """
    Solution set {x : M x = b} of a consistent system, in canonical form.

    The minimum-norm solution lies in the row space of M, which is the
    orthogonal complement of ker M, so it is the canonical translation.

    Raises:
        InputError: If the system has no solution.
    """
    A = as_matrix(M)
    rhs = np.asarray(b, dtype=np.float64).reshape(-1)
    solution, residual = least_squares(A, rhs)
    if residual > 1e-8 * (1.0 + np.linalg.norm(rhs)):
        raise InputError(f"system is inconsistent (residual {residual:.3e})")
    L = LinearSubspace.kernel(A)
    a = solution - project_linear(L, solution)
    return AffineSubspace(L, a)
