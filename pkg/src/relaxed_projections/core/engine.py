from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum, auto
import logging

import numpy as np

from relaxed_projections.core.errors import InputError, NumericalAnomalyError
from relaxed_projections.core.linops import as_vector
from relaxed_projections.core.subspaces import AffineSubspace

NORMS_ONLY_THRESHOLD = 100_000
"""int: Runs of at least this many steps keep only the norms unless asked otherwise."""


class ScheduleKind(Enum):
    """
    Which subspace is picked at each step.

    Members:
    - CYCLIC: 0, 1, ..., ell - 1, 0, 1, ...
    - RANDOM_UNIFORM: independent uniform draws from a Philox stream keyed by the seed.
    - EXPLICIT: a user-given index list.
    """
    CYCLIC = auto()
    RANDOM_UNIFORM = auto()
    EXPLICIT = auto()


class LambdaKind(Enum):
    FIXED = auto()
    VARYING = auto()


@dataclass(frozen=True)
class LambdaRule:
    """
    Relaxation parameters of a run.

    Attributes:
        kind (LambdaKind): FIXED uses `cap` at every step; VARYING uses `values`
            if given, otherwise draws lam_n uniformly on [0, cap].
        cap (float): The fixed lam, or the upper bound of a varying sequence, in ]0, 2[.
        values (tuple[float, ...] | None): Explicit varying sequence, each in [0, cap].
        seed (int): Seed of the random varying draws.
    """
    kind: LambdaKind
    cap: float
    values: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.cap < 2.0:
            raise InputError(f"relaxation cap must lie in ]0, 2[, got {self.cap}")
        if self.values is not None:
            if self.kind is LambdaKind.FIXED:
                raise InputError("a fixed relaxation rule takes no value list")
            if any(not 0.0 <= v <= self.cap for v in self.values):
                raise InputError(f"varying relaxation parameters must lie in [0, {self.cap}]")

    @classmethod
    def fixed(cls, lam: float) -> "LambdaRule":
        return cls(LambdaKind.FIXED, lam)

    @classmethod
    def varying(cls, cap: float, values: Sequence[float] | None = None, seed: int = 0) -> "LambdaRule":
        return cls(LambdaKind.VARYING, cap, None if values is None else tuple(float(v) for v in values), seed)

    @property
    def is_fixed(self) -> bool:
        return self.kind is LambdaKind.FIXED

    def lambdas(self, n_steps: int) -> np.ndarray:
        """lam_0, ..., lam_{n_steps - 1}."""
        if self.is_fixed:
            return np.full(n_steps, self.cap)
        if self.values is not None:
            if len(self.values) < n_steps:
                raise InputError(f"varying rule has {len(self.values)} values, {n_steps} steps requested")
            return np.asarray(self.values[:n_steps], dtype=np.float64)
        rng = np.random.Generator(np.random.Philox(key=self.seed + 1))
        return rng.uniform(0.0, self.cap, size=n_steps)

    def mu(self, n_steps: int) -> np.ndarray:
        """mu_n = lam_n / lam, the convex weights of the varying-parameter argument."""
        return self.lambdas(n_steps) / self.cap


@dataclass(frozen=True)
class Schedule:
    """
    Index and relaxation schedule of an iteration.

    Attributes:
        kind (ScheduleKind): How indices are chosen.
        lambda_rule (LambdaRule): How relaxation parameters are chosen.
        seed (int): Key of the random index stream.
        indices (tuple[int, ...] | None): Explicit index list (EXPLICIT only).
    """
    kind: ScheduleKind
    lambda_rule: LambdaRule
    seed: int = 0
    indices: tuple[int, ...] | None = None

    def __post_init__(self):
        if (self.kind is ScheduleKind.EXPLICIT) != (self.indices is not None):
            raise InputError("an index list is given exactly for explicit schedules")

    @classmethod
    def cyclic(cls, rule: LambdaRule) -> "Schedule":
        return cls(ScheduleKind.CYCLIC, rule)

    @classmethod
    def random_uniform(cls, rule: LambdaRule, seed: int = 0) -> "Schedule":
        return cls(ScheduleKind.RANDOM_UNIFORM, rule, seed)

    @classmethod
    def explicit(cls, indices: Sequence[int], rule: LambdaRule) -> "Schedule":
        return cls(ScheduleKind.EXPLICIT, rule, indices=tuple(int(i) for i in indices))

    @property
    def cap(self) -> float:
        return self.lambda_rule.cap

    @property
    def label(self) -> str:
        return {
            ScheduleKind.CYCLIC: "cyclic",
            ScheduleKind.RANDOM_UNIFORM: "random",
            ScheduleKind.EXPLICIT: "explicit",
        }[self.kind]

    def indices_for(self, ell: int, n_steps: int) -> np.ndarray:
        """
        Subspace indices i_0, ..., i_{n_steps - 1}.

        Random draws come from a counter-based Philox stream keyed by the seed,
        so step n always receives the same index whatever n_steps is.

        Raises:
            InputError: If an explicit list is too short or out of range.
        """
        match self.kind:
            case ScheduleKind.CYCLIC:
                return np.arange(n_steps) % ell
            case ScheduleKind.RANDOM_UNIFORM:
                rng = np.random.Generator(np.random.Philox(key=self.seed))
                return rng.integers(0, ell, size=n_steps)
            case ScheduleKind.EXPLICIT:
                if len(self.indices) < n_steps:
                    raise InputError(f"explicit schedule has {len(self.indices)} indices, {n_steps} steps requested")
                chosen = np.asarray(self.indices[:n_steps], dtype=np.int64)
                if chosen.size and (chosen.min() < 0 or chosen.max() >= ell):
                    raise InputError(f"explicit schedule index out of range [0, {ell})")
                return chosen


@dataclass
class IterationTrace:
    """
    History of x_{n+1} = R_{A_{i_n}, lam_n} x_n.

    Attributes:
        iterates (np.ndarray | None): (N + 1) x d array x_0 ... x_N, or None for a
            norms-only run.
        chosen_indices (np.ndarray): i_0 ... i_{N-1}.
        lambdas (np.ndarray): lam_0 ... lam_{N-1}.
        norms (np.ndarray): ||x_0|| ... ||x_N||.
        final (np.ndarray): x_N (kept even in norms-only runs).
    """
    iterates: np.ndarray | None
    chosen_indices: np.ndarray
    lambdas: np.ndarray
    norms: np.ndarray
    final: np.ndarray = field(repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.chosen_indices)

    @property
    def sup_norm(self) -> float:
        return float(np.max(self.norms))

    @property
    def x0(self) -> np.ndarray:
        if self.iterates is None:
            raise InputError("norms-only trace does not keep x0")
        return self.iterates[0]


def _check_affine_collection(collection: Sequence[AffineSubspace]) -> int:
    if not collection:
        raise InputError("collection must be nonempty")
    d = collection[0].dim_ambient
    if any(A.dim_ambient != d for A in collection):
        raise InputError("affine subspaces live in different ambient dimensions")
    return d


def iterate(
    collection: Sequence[AffineSubspace],
    schedule: Schedule,
    x0,
    n_steps: int,
    store_iterates: bool | None = None,
) -> IterationTrace:
    """
    Run x_{n+1} = (1 - lam_n) x_n + lam_n (a_n + P_{L_n} x_n) under a schedule.

    Args:
        collection (Sequence[AffineSubspace]): The affine subspaces A_0 ... A_{ell-1}.
        schedule (Schedule): Index and relaxation schedule.
        x0: Starting point.
        n_steps (int): Number of steps N >= 0.
        store_iterates (bool | None): Keep the full history. Defaults to True
            below NORMS_ONLY_THRESHOLD steps.
    Returns:
        IterationTrace: The run.
    Raises:
        InputError: On bad dimensions, n_steps < 0 or an invalid explicit schedule.
        NumericalAnomalyError: If an iterate becomes non-finite.
    """
    d = _check_affine_collection(collection)
    x = as_vector(x0, d).copy()
    if n_steps < 0:
        raise InputError(f"n_steps must be >= 0, got {n_steps}")
    if store_iterates is None:
        store_iterates = n_steps < NORMS_ONLY_THRESHOLD

    chosen = schedule.indices_for(len(collection), n_steps)
    lambdas = schedule.lambda_rule.lambdas(n_steps)
    projectors = [A.direction.projector for A in collection]
    translations = [A.translation for A in collection]

    norms = np.empty(n_steps + 1)
    norms[0] = np.linalg.norm(x)
    history = np.empty((n_steps + 1, d)) if store_iterates else None
    if history is not None:
        history[0] = x

    for n in range(n_steps):
        i = chosen[n]
        lam = lambdas[n]
        x = (1.0 - lam) * x + lam * (translations[i] + projectors[i] @ x)
        norms[n + 1] = np.linalg.norm(x)
        if history is not None:
            history[n + 1] = x

    if not np.all(np.isfinite(norms)):
        raise NumericalAnomalyError(f"iteration produced non-finite iterates ({schedule.label} schedule)")

    logging.debug(f"iterate: {n_steps} {schedule.label} steps, sup norm {np.max(norms):.6g}")
    return IterationTrace(history, chosen, lambdas, norms, x)


def linear_maps(collection: Sequence[AffineSubspace], lam: float) -> list[np.ndarray]:
    """Matrices of R_{L,lam} = (1 - lam) Id + lam P_L for each member."""
    d = _check_affine_collection(collection)
    return [(1.0 - lam) * np.eye(d) + lam * A.direction.projector for A in collection]


def unrolled_decomposition(
    collection: Sequence[AffineSubspace],
    schedule: Schedule,
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """
    The two pieces of x_{n+1} = R_n...R_0 x_0 + lam * q(n, 0).

    q(n, 0) = sum_{j=0}^{n} R_n...R_{j+1} a_j is accumulated right to left:
    the prefix product R_n...R_{j+1} starts at the identity (empty product, so
    q(n, n) contributes a_n) and absorbs one factor per term.

    Returns:
        tuple[np.ndarray, np.ndarray]: The matrix R_n...R_0 and the vector q(n, 0).
    Raises:
        InputError: For a varying-relaxation schedule or n < 0.
    """
    if not schedule.lambda_rule.is_fixed:
        raise InputError("the unrolled representation needs a fixed relaxation parameter")
    if n < 0:
        raise InputError(f"n must be >= 0, got {n}")
    d = _check_affine_collection(collection)
    maps = linear_maps(collection, schedule.cap)
    chosen = schedule.indices_for(len(collection), n + 1)

    prefix = np.eye(d)
    tail = np.zeros(d)
    for j in range(n, -1, -1):
        tail += prefix @ collection[chosen[j]].translation
        prefix = prefix @ maps[chosen[j]]
    return prefix, tail


def unrolled_tail(collection: Sequence[AffineSubspace], schedule: Schedule, n: int) -> np.ndarray:
    """q(n, 0) = sum_{j=0}^{n} R_n...R_{j+1} a_j (see unrolled_decomposition)."""
    return unrolled_decomposition(collection, schedule, n)[1]


def fejer_profile(trace: IterationTrace, z) -> np.ndarray:
    """Distances ||x_n - z|| along a trace with stored iterates."""
    if trace.iterates is None:
        raise InputError("fejer_profile needs stored iterates")
    point = as_vector(z, trace.iterates.shape[1])
    return np.linalg.norm(trace.iterates - point, axis=1)


def is_fejer_monotone(distances: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.all(np.diff(distances) <= tol * (1.0 + distances[:-1])))


def cyclic_subsequence(trace: IterationTrace, period: int, include_start: bool = False) -> np.ndarray:
    """
    x_{k * period} for k >= 1 (k >= 0 with include_start); for a cyclic schedule
    over `period` subspaces this is Q^k x_0.
    """
    if trace.iterates is None:
        raise InputError("cyclic_subsequence needs stored iterates")
    if period < 1:
        raise InputError(f"period must be >= 1, got {period}")
    start = 0 if include_start else period
    return trace.iterates[start::period]
