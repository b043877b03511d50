import numpy as np
import pytest

from relaxed_projections.core.kaczmarz import gaussian_instance
from relaxed_projections.core.subspaces import AffineSubspace, LinearSubspace, canonicalize_affine

GAUSSIAN_SHAPE = (15, 10)
GAUSSIAN_SEED = 42


@pytest.fixture
def rng():
    return np.random.default_rng(20251111)


@pytest.fixture
def random_subspace(rng):
    """Factory: a random k-dimensional subspace of R^d."""

    def make(d: int, k: int) -> LinearSubspace:
        if k == 0:
            return LinearSubspace.zero(d)
        return LinearSubspace.span(list(rng.standard_normal((k, d))), dim=d)

    return make


@pytest.fixture
def random_affine(rng, random_subspace):
    """Factory: a random affine subspace a + L with dim L = k and ||a|| of order `scale`."""

    def make(d: int, k: int, scale: float = 1.0) -> AffineSubspace:
        L = random_subspace(d, k)
        point = scale * rng.standard_normal(d)
        return canonicalize_affine(point, list(L.basis.T)) if k else AffineSubspace(L, point)

    return make


@pytest.fixture
def random_collection(rng, random_affine):
    """Factory: ell random affine subspaces of R^d with random dimensions in [1, d - 1]."""

    def make(d: int, ell: int, scale: float = 1.0) -> list[AffineSubspace]:
        return [random_affine(d, int(rng.integers(1, d)), scale) for _ in range(ell)]

    return make


@pytest.fixture
def gaussian_15x10_system():
    """The normalized Gaussian 15 x 10 system."""
    return gaussian_instance(*GAUSSIAN_SHAPE, seed=GAUSSIAN_SEED)
