from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum, auto
from functools import cache
from itertools import combinations
import logging
import math

import numpy as np
from scipy import optimize

from relaxed_projections.core.errors import GuardExceededError, InputError
from relaxed_projections.core.linops import operator_norm
from relaxed_projections.core.subspaces import LinearSubspace, intersect, sine_cosine

KAPPA_SAFETY = 1.01
"""float: Inflation applied to the largest sampled ratio."""

KAPPA_STAR_FLOOR = 1.0 + 1e-6
"""float: kappa* is clamped above 1 so that the contraction exponent is meaningful."""

DEFAULT_GUARD = 8
"""int: Largest ell for which subcollections are enumerated without an override."""

DEFAULT_SAMPLES = 2_000
DEFAULT_VALIDATION_SAMPLES = 100_000
REFINE_STEPS = 200
"""int: Iteration cap of each local refinement."""

REFINE_STARTS = 5
"""int: Number of best random starts that are refined."""

VALIDATION_BATCH = 20_000
VALIDATION_SEED_SHIFT = 7_919


class KappaMethod(Enum):
    """
    How a regularity constant was obtained.

    Members:
    - EMPIRICAL: multistart sampling plus local refinement, validated on a fresh sample.
    """
    EMPIRICAL = auto()


@dataclass(frozen=True)
class PairKappa:
    """
    One entry of the kappa* ledger: the regularity constant of the pair
    {cap of first, cap of second}, where first and second are subcollections.
    """
    first: frozenset[int]
    second: frozenset[int]
    kappa: float


@dataclass(frozen=True)
class RegularityReport:
    """
    Evidence for a regularity constant.

    Attributes:
        kappa (float): Constant of d_cap(x) <= kappa * max_L d_L(x) for the collection.
        kappa_star (float): Aggregate over pairs of subcollection intersections, > 1.
        method (KappaMethod): How kappa was obtained.
        samples_checked (int): Random starts plus validation vectors used.
        max_violation (float): Largest d_cap(x) - kappa * max_L d_L(x) seen on the
            validation sample; <= 0 when no counterexample was found.
        pairs (tuple[PairKappa, ...]): Per-pair ledger (filled by kappa_star).
    """
    kappa: float
    kappa_star: float
    method: KappaMethod
    samples_checked: int
    max_violation: float
    pairs: tuple[PairKappa, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.kappa < 1.0:
            raise InputError(f"kappa must be >= 1, got {self.kappa}")
        if self.kappa_star <= 1.0:
            raise InputError(f"kappa_star must be > 1, got {self.kappa_star}")


@dataclass(frozen=True)
class ContractionFactor:
    """
    sqrt(1 - lam (2 - lam) kappa_star^(-2 (ell - 1))), the bound on ||Q P_{L-perp}|| for a cycle Q.
    """
    value: float
    lam: float
    ell: int
    kappa_star: float


def _check_collection(collection: Sequence[LinearSubspace]) -> int:
    if not collection:
        raise InputError("collection must be nonempty")
    d = collection[0].dim_ambient
    if any(L.dim_ambient != d for L in collection):
        raise InputError("subspaces live in different ambient dimensions")
    return d


def _max_distance(X: np.ndarray, complements: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise max_L d_L(x) for a batch X (n x d)."""
    return np.max(
        np.stack([np.linalg.norm(X @ C, axis=1) for C in complements]),
        axis=0,
    )


def _refine(y: np.ndarray, grams: Sequence[np.ndarray], steps: int) -> float:
    """
    Minimize f(y) = max_L ||A_L y|| over the unit sphere, starting from y.

    Solved in epigraph form, min s subject to y^T G_L y <= s and ||y||^2 = 1
    with G_L = A_L^T A_L, by SLSQP. Returns the smallest f attained at a point
    of the sphere.
    """
    def f(v):
        v = v / np.linalg.norm(v)
        return math.sqrt(max(0.0, max(float(v @ G @ v) for G in grams)))

    m = y.size
    y = y / np.linalg.norm(y)
    objective_grad = np.append(np.zeros(m), 1.0)
    constraints = [
        {
            "type": "ineq",
            "fun": lambda z, G=G: z[m] - z[:m] @ G @ z[:m],
            "jac": lambda z, G=G: np.append(-2.0 * (G @ z[:m]), 1.0),
        }
        for G in grams
    ]
    constraints.append({
        "type": "eq",
        "fun": lambda z: z[:m] @ z[:m] - 1.0,
        "jac": lambda z: np.append(2.0 * z[:m], 0.0),
    })
    start = np.append(y, f(y) ** 2)
    result = optimize.minimize(
        lambda z: z[m],
        start,
        jac=lambda z: objective_grad,
        method="SLSQP",
        constraints=constraints,
        options={"maxiter": steps, "ftol": 1e-15},
    )
    best = f(y)
    candidate = result.x[:m]
    if np.all(np.isfinite(candidate)) and np.linalg.norm(candidate) > 0.0:
        best = min(best, f(candidate))
    return best


def estimate_kappa(
    collection: Sequence[LinearSubspace],
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    validation_samples: int = DEFAULT_VALIDATION_SAMPLES,
    refine_steps: int = REFINE_STEPS,
) -> RegularityReport:
    """
    Empirical regularity constant of a collection of linear subspaces.

    Both sides of d_cap(x) <= kappa * max_L d_L(x) vanish on the intersection and
    scale with ||x||, so the supremum of the ratio is searched on the unit sphere
    of the orthogonal complement of the intersection, where d_cap(x) = 1. The
    best REFINE_STARTS of `n_samples` random starts are refined locally, the result is
    inflated by KAPPA_SAFETY and checked against `validation_samples` fresh
    random vectors of the whole space.

    Args:
        collection (Sequence[LinearSubspace]): Nonempty collection, common dimension.
        n_samples (int): Number of random starts (>= 1).
        seed (int): Seed; the result is deterministic given it.
        validation_samples (int): Size of the independent validation sample.
        refine_steps (int): Iteration cap of each local refinement.
    Returns:
        RegularityReport: kappa (and kappa_star = max(kappa, KAPPA_STAR_FLOOR)).
    Raises:
        InputError: On an empty collection, mixed dimensions or n_samples < 1.
    """
    d = _check_collection(collection)
    if n_samples < 1:
        raise InputError(f"n_samples must be >= 1, got {n_samples}")

    cap = intersect(collection)
    # a member equal to the intersection makes the inequality hold with kappa = 1
    if cap.dim == d or any(L.same_as(cap) for L in collection):
        return RegularityReport(1.0, KAPPA_STAR_FLOOR, KappaMethod.EMPIRICAL, 0, 0.0)

    perp_basis = cap.orthogonal_complement().basis
    complements = [L.complement_projector for L in collection]

    rng = np.random.default_rng(np.random.SeedSequence([seed, n_samples]))
    Y = rng.standard_normal((n_samples, perp_basis.shape[1]))
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    starts = _max_distance(Y @ perp_basis.T, complements)
    grams = [perp_basis.T @ C @ perp_basis for C in complements]
    order = np.argsort(starts)[:REFINE_STARTS]
    f_min = min(float(starts[order[0]]), *(_refine(Y[i], grams, refine_steps) for i in order))
    # f_min > 0 because a unit vector of the complement cannot lie in every member
    kappa = max(1.0, KAPPA_SAFETY / max(f_min, 1e-300))

    violation, worst_ratio = _validate(kappa, perp_basis, complements, d, validation_samples, seed)
    if violation > 0.0:
        logging.warning(
            f"estimate_kappa: validation found ratio {worst_ratio:.6g} above kappa {kappa:.6g}; inflating"
        )
        kappa = KAPPA_SAFETY * worst_ratio
        violation, _ = _validate(kappa, perp_basis, complements, d, validation_samples, seed)

    logging.debug(f"estimate_kappa: kappa={kappa:.6g} from {n_samples} starts, violation={violation:.3e}")
    return RegularityReport(
        kappa=kappa,
        kappa_star=max(kappa, KAPPA_STAR_FLOOR),
        method=KappaMethod.EMPIRICAL,
        samples_checked=n_samples + validation_samples,
        max_violation=violation if math.isfinite(violation) else 0.0,
    )


def _validate(kappa, perp_basis, complements, d, n, seed) -> tuple[float, float]:
    """
    Largest violation d_cap(x) - kappa * max_L d_L(x) and largest ratio on a
    fresh sample, drawn in fixed batches with independent child seeds.
    """
    if n <= 0:
        return -math.inf, 0.0
    n_batches = -(-n // VALIDATION_BATCH)
    children = np.random.SeedSequence([seed + VALIDATION_SEED_SHIFT, n]).spawn(n_batches)
    violation, ratio = -math.inf, 0.0
    for i, child in enumerate(children):
        size = min(VALIDATION_BATCH, n - i * VALIDATION_BATCH)
        X = np.random.default_rng(child).standard_normal((size, d))
        d_cap = np.linalg.norm(X @ perp_basis, axis=1)
        d_max = _max_distance(X, complements)
        violation = max(violation, float(np.max(d_cap - kappa * d_max)))
        positive = d_max > 0.0
        if np.any(positive):
            ratio = max(ratio, float(np.max(d_cap[positive] / d_max[positive])))
    return violation, ratio


class KappaStarOracle:
    """
    Memoized kappa* for every subcollection of a fixed collection.

    kappa*(S) is the largest regularity constant of a pair {cap S1, cap S2} over
    nonempty S1, S2 contained in S, clamped to KAPPA_STAR_FLOOR. Pair constants
    are computed once per distinct pair of intersections and shared by every
    subcollection that contains the pair.

    Attributes:
        subspaces (tuple[LinearSubspace, ...]): The collection.
        guard (int): Largest admissible collection size.
    """

    def __init__(
        self,
        subspaces: Sequence[LinearSubspace],
        n_samples: int = DEFAULT_SAMPLES,
        seed: int = 0,
        validation_samples: int = DEFAULT_VALIDATION_SAMPLES,
        guard: int = DEFAULT_GUARD,
    ):
        _check_collection(subspaces)
        if len(subspaces) > guard:
            raise GuardExceededError(len(subspaces), guard, "kappa*")
        self.subspaces = tuple(subspaces)
        self.guard = guard
        self._n_samples = n_samples
        self._seed = seed
        self._validation_samples = validation_samples

        # distinct intersections of all nonempty subcollections
        self._distinct: list[LinearSubspace] = []
        self._subset_id: dict[frozenset[int], int] = {}
        ell = len(self.subspaces)
        for size in range(1, ell + 1):
            for subset in combinations(range(ell), size):
                cap = intersect([self.subspaces[i] for i in subset])
                for j, known in enumerate(self._distinct):
                    if known.same_as(cap):
                        self._subset_id[frozenset(subset)] = j
                        break
                else:
                    self._subset_id[frozenset(subset)] = len(self._distinct)
                    self._distinct.append(cap)
        self._pair_kappa = cache(self._compute_pair)

    def _compute_pair(self, i: int, j: int) -> float:
        first, second = self._distinct[i], self._distinct[j]
        if i == j or first.contains(second) or second.contains(first):
            return 1.0
        report = estimate_kappa(
            [first, second],
            n_samples=self._n_samples,
            seed=self._seed * 1_000_003 + i * 1_009 + j,
            validation_samples=self._validation_samples,
        )
        logging.debug(f"kappa*: pair ({i}, {j}) kappa={report.kappa:.6g}")
        return report.kappa

    def pair_kappa(self, first: frozenset[int], second: frozenset[int]) -> float:
        i, j = sorted((self._subset_id[first], self._subset_id[second]))
        return self._pair_kappa(i, j)

    def __call__(self, indices: Iterable[int]) -> float:
        members = sorted(set(indices))
        if not members:
            raise InputError("kappa* of an empty subcollection is undefined")
        ids = sorted({self._subset_id[s] for s in _nonempty_subsets(members)})
        best = 1.0
        for a, i in enumerate(ids):
            for j in ids[a + 1:]:
                best = max(best, self._pair_kappa(i, j))
        return max(best, KAPPA_STAR_FLOOR)

    def ledger(self) -> tuple[PairKappa, ...]:
        """Pair constants of the full collection, one entry per distinct pair of intersections."""
        representative: dict[int, frozenset[int]] = {}
        for subset, sid in self._subset_id.items():
            if sid not in representative or len(subset) < len(representative[sid]):
                representative[sid] = subset
        ids = sorted(representative)
        rows = []
        for a, i in enumerate(ids):
            for j in ids[a + 1:]:
                rows.append(PairKappa(representative[i], representative[j], self._pair_kappa(i, j)))
        return tuple(rows)


def _nonempty_subsets(members: Sequence[int]):
    for size in range(1, len(members) + 1):
        for subset in combinations(members, size):
            yield frozenset(subset)


def kappa_star(
    collection: Sequence[LinearSubspace],
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    validation_samples: int = DEFAULT_VALIDATION_SAMPLES,
    guard: int = DEFAULT_GUARD,
) -> RegularityReport:
    """
    kappa* of a collection together with the kappa of the full collection and the pair ledger.

    Raises:
        GuardExceededError: If len(collection) > guard.
    """
    oracle = KappaStarOracle(collection, n_samples, seed, validation_samples, guard)
    full = estimate_kappa(collection, n_samples, seed, validation_samples)
    value = oracle(range(len(collection)))
    pairs = oracle.ledger()
    logging.info(f"kappa*: {value:.6g} over {len(pairs)} distinct pairs (ell={len(collection)})")
    return RegularityReport(
        kappa=full.kappa,
        kappa_star=value,
        method=KappaMethod.EMPIRICAL,
        samples_checked=full.samples_checked,
        max_violation=full.max_violation,
        pairs=pairs,
    )


# -------------------------
# Contraction bounds
# -------------------------

def contraction_factor(lam: float, ell: int, kappa_star: float) -> ContractionFactor:
    """
    Bound sqrt(1 - lam (2 - lam) kappa_star^(-2 (ell - 1))) on ||Q P_{L-perp}|| for a cycle Q.

    Raises:
        InputError: If lam is not in ]0, 2[, ell < 1 or kappa_star <= 1.
    """
    if not 0.0 < lam < 2.0:
        raise InputError(f"contraction factor needs lam in ]0, 2[, got {lam}")
    if ell < 1:
        raise InputError(f"ell must be >= 1, got {ell}")
    if kappa_star <= 1.0:
        raise InputError(f"kappa_star must be > 1, got {kappa_star}")
    value = math.sqrt(max(0.0, 1.0 - lam * (2.0 - lam) * kappa_star ** (-2.0 * (ell - 1))))
    return ContractionFactor(value=value, lam=lam, ell=ell, kappa_star=kappa_star)


def word_contraction_factor(lam: float, n_distinct: int, kappa_star: float) -> ContractionFactor:
    """Bound on ||R_q...R_0 P_{(L_q)-perp}|| for any word using n_distinct subspaces."""
    return contraction_factor(lam, n_distinct, kappa_star)


def word_contraction_norm(subspaces: Sequence[LinearSubspace], word: Sequence[int], lam: float) -> float:
    """
    ||R_q...R_0 P_{(L_q)-perp}|| for the linear relaxed projectors along `word`
    (word[0] applied first), L_q the intersection of the subspaces used.
    """
    d = _check_collection(subspaces)
    used = [subspaces[i] for i in sorted(set(word))]
    T = np.eye(d)
    for i in word:
        T = ((1.0 - lam) * np.eye(d) + lam * subspaces[i].projector) @ T
    return operator_norm(T @ intersect(used).complement_projector)


def sine_recursion_profile(
    subspaces: Sequence[LinearSubspace],
    word: Sequence[int],
    lam: float,
    x,
    kappa_star: float,
) -> list[tuple[int, int, float, float]]:
    """
    Run x^(i+1) = R_{L_i,lam} x^(i) along `word` and tabulate the sine recursion.

    Returns:
        list[tuple[int, int, float, float]]: Rows (q, N_q, sin_{L_q}(x^(q)),
            kappa_star^(N_q - 1) * max_{i <= q} sin_{L_i}(x^(i))), where L_q is
            the intersection of the first q + 1 subspaces of the word and N_q
            their number of distinct members.
    """
    _check_collection(subspaces)
    if not word:
        return []
    current = np.asarray(x, dtype=np.float64)
    rows = []
    worst = 0.0
    seen: list[int] = []
    for q, i in enumerate(word):
        if i not in seen:
            seen.append(i)
        sin_i, _ = sine_cosine(subspaces[i], current)
        worst = max(worst, sin_i)
        cap = intersect([subspaces[j] for j in seen])
        lhs, _ = sine_cosine(cap, current)
        rows.append((q, len(seen), lhs, kappa_star ** (len(seen) - 1) * worst))
        current = (1.0 - lam) * current + lam * (subspaces[i].projector @ current)
    return rows


# -------------------------
# Two-lines family
# -------------------------

def two_lines(theta: float) -> list[LinearSubspace]:
    """The x-axis and the line at angle theta through the origin of R^2."""
    if not 0.0 < theta <= math.pi / 2:
        raise InputError(f"theta must lie in ]0, pi/2], got {theta}")
    return [
        LinearSubspace(np.array([[1.0], [0.0]])),
        LinearSubspace(np.array([[math.cos(theta)], [math.sin(theta)]])),
    ]


def pair_kappa_closed_form(theta: float) -> float:
    """kappa of two lines at angle theta: the worst vector is the acute bisector, at distance sin(theta/2) from both."""
    if not 0.0 < theta <= math.pi / 2:
        raise InputError(f"theta must lie in ]0, pi/2], got {theta}")
    return 1.0 / math.sin(theta / 2.0)


def theta_sweep(
    thetas: Sequence[float],
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    validation_samples: int = DEFAULT_VALIDATION_SAMPLES,
) -> list[tuple[float, float, float]]:
    """Rows (theta, empirical kappa, closed-form kappa) for the two-lines family."""
    rows = []
    for theta in thetas:
        report = estimate_kappa(two_lines(theta), n_samples, seed, validation_samples)
        rows.append((float(theta), report.kappa, pair_kappa_closed_form(theta)))
    return rows
