from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from functools import cache
from itertools import combinations
import logging

import numpy as np

from relaxed_projections.core.engine import IterationTrace, linear_maps
from relaxed_projections.core.errors import GuardExceededError, InputError
from relaxed_projections.core.linops import as_vector
from relaxed_projections.core.regularity import (
    DEFAULT_GUARD,
    DEFAULT_SAMPLES,
    DEFAULT_VALIDATION_SAMPLES,
    KAPPA_STAR_FLOOR,
    KappaStarOracle,
    contraction_factor,
)
from relaxed_projections.core.subspaces import AffineSubspace

CERTIFICATE_LABEL = "validated-empirical"


@dataclass(frozen=True)
class BoundCertificate:
    """
    The boundedness constant C of a collection for a relaxation parameter lam.

    Every sum q(n, 0) = sum_j R_n...R_{j+1} a_j has norm at most C, hence every
    iterate satisfies ||x_n|| <= ||x_0|| + lam * C, for any schedule drawing
    from the collection and any relaxation sequence in [0, lam].

    Attributes:
        tau (float): Largest canonical translation norm.
        D (float): Largest constant of a proper subcollection (0 when ell = 1).
        kappa_star (float): kappa* of the collection of linear parts.
        ell (int): Number of distinct linear parts.
        lam (float): Relaxation parameter (or cap) in ]0, 2[.
        C (float): The constant.
        ledger (dict[frozenset[int], float]): C of every subcollection closed
            under parallelism, keyed by member indices.
        label (str): Provenance of the kappa* values.
    """
    tau: float
    D: float
    kappa_star: float
    ell: int
    lam: float
    C: float
    ledger: dict[frozenset[int], float] = field(repr=False, compare=False)
    label: str = CERTIFICATE_LABEL

    def bound(self, x0_norm: float) -> float:
        """||x_0|| + lam * C."""
        return x0_norm + self.lam * self.C


def parallel_classes(collection: Sequence[AffineSubspace]) -> list[list[int]]:
    """Group member indices by linear part (members of a class are parallel)."""
    classes: list[list[int]] = []
    for i, A in enumerate(collection):
        for members in classes:
            if collection[members[0]].direction.same_as(A.direction):
                members.append(i)
                break
        else:
            classes.append([i])
    return classes


def base_constant(translation_norms: Sequence[float], lam: float) -> float:
    """
    Constant of a collection whose members all share one linear part L.

    There R_{L,lam} acts on L-perp as multiplication by 1 - lam, so
    q(n, 0) = sum_j (1 - lam)^(n - j) a_j. For a single translation the partial
    sums (1 - (1 - lam)^(n + 1)) / lam peak at 1/lam when lam <= 1 and at 1
    (n = 0) when lam > 1. Several parallel translations are bounded by the
    absolute geometric series tau / (1 - |1 - lam|).
    """
    tau = max(translation_norms)
    if len(translation_norms) == 1:
        return tau / min(lam, 1.0)
    return tau / (1.0 - abs(1.0 - lam))


def bound_certificate(
    collection: Sequence[AffineSubspace],
    lam: float,
    kappa_oracle: Callable[[Iterable[int]], float] | None = None,
    guard: int = DEFAULT_GUARD,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    validation_samples: int = DEFAULT_VALIDATION_SAMPLES,
) -> BoundCertificate:
    """
    Compute C by strong induction over the subcollection lattice.

    For a subcollection S with one linear part, C(S) = base_constant. Otherwise
    C(S) = (tau_S + D_S) / (1 - sqrt(1 - lam (2 - lam) kappa*(S)^(-2 (ell_S - 1)))),
    with D_S the largest C over proper nonempty subcollections of S. Values
    are memoized over the lattice.

    Args:
        collection (Sequence[AffineSubspace]): The affine subspaces.
        lam (float): Relaxation parameter (cap) in ]0, 2[.
        kappa_oracle (Callable | None): Maps a set of parallel-class indices to
            kappa*; defaults to a KappaStarOracle over the class linear parts.
        guard (int): Largest admissible number of distinct linear parts.
        n_samples, seed, validation_samples: Passed to the default oracle.
    Returns:
        BoundCertificate: The constant with its full ledger.
    Raises:
        InputError: If lam is not in ]0, 2[ or the collection is empty.
        GuardExceededError: If the number of distinct linear parts exceeds guard.
    """
    if not collection:
        raise InputError("collection must be nonempty")
    if not 0.0 < lam < 2.0:
        raise InputError(f"certificate needs lam in ]0, 2[, got {lam}")
    classes = parallel_classes(collection)
    ell = len(classes)
    if ell > guard:
        raise GuardExceededError(ell, guard, "bound certificate")
    if kappa_oracle is None:
        kappa_oracle = KappaStarOracle(
            [collection[members[0]].direction for members in classes],
            n_samples=n_samples,
            seed=seed,
            validation_samples=validation_samples,
            guard=guard,
        )

    norms = [float(np.linalg.norm(A.translation)) for A in collection]
    ledger: dict[frozenset[int], float] = {}

    def members_of(S: frozenset[int]) -> frozenset[int]:
        return frozenset(i for c in S for i in classes[c])

    @cache
    def constant(S: frozenset[int]) -> tuple[float, float, float, float]:
        members = members_of(S)
        tau = max(norms[i] for i in members)
        if len(S) == 1:
            value = base_constant([norms[i] for i in sorted(members)], lam)
            result = (value, tau, 0.0, KAPPA_STAR_FLOOR)
        else:
            D = max(
                constant(frozenset(T))[0]
                for size in range(1, len(S))
                for T in combinations(sorted(S), size)
            )
            kappa = kappa_oracle(S)
            factor = contraction_factor(lam, len(S), kappa).value
            value = (tau + D) / (1.0 - factor)
            result = (value, tau, D, kappa)
        ledger[members] = result[0]
        logging.debug(f"certificate: members {sorted(members)} C={result[0]:.6g}")
        return result

    C, tau, D, kappa = constant(frozenset(range(ell)))
    logging.info(f"certificate: ell={ell} lam={lam} tau={tau:.6g} D={D:.6g} kappa*={kappa:.6g} C={C:.6g}")
    return BoundCertificate(
        tau=tau,
        D=D,
        kappa_star=kappa,
        ell=ell,
        lam=lam,
        C=C,
        ledger=dict(sorted(ledger.items(), key=lambda item: (len(item[0]), sorted(item[0])))),
    )


def verify_boundedness(trace: IterationTrace, cert: BoundCertificate, x0) -> tuple[bool, float]:
    """
    Check sup_n ||x_n|| <= ||x_0|| + lam * C (with slack 1e-8 (1 + C)).

    Returns:
        tuple[bool, float]: Whether the bound holds and the margin
            (||x_0|| + lam C) - sup_n ||x_n||.
    """
    limit = cert.bound(float(np.linalg.norm(as_vector(x0))))
    margin = limit - trace.sup_norm
    ok = bool(trace.sup_norm <= limit + 1e-8 * (1.0 + cert.C))
    if not ok:
        logging.warning(f"verify_boundedness: sup norm {trace.sup_norm:.6g} exceeds bound {limit:.6g}")
    return ok, float(margin)


def tail_norms(collection: Sequence[AffineSubspace], word: Sequence[int], lam: float) -> np.ndarray:
    """||q(n, 0)|| for n = 0 ... len(word) - 1, via q(n, 0) = R_n q(n - 1, 0) + a_n."""
    maps = linear_maps(collection, lam)
    q = np.zeros(collection[0].dim_ambient)
    out = np.empty(len(word))
    for n, i in enumerate(word):
        q = maps[i] @ q + collection[i].translation
        out[n] = np.linalg.norm(q)
    return out
