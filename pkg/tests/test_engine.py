import numpy as np
import pytest

from relaxed_projections.core.engine import (
    LambdaRule,
    Schedule,
    cyclic_subsequence,
    fejer_profile,
    is_fejer_monotone,
    iterate,
    linear_maps,
    unrolled_decomposition,
    unrolled_tail,
)
from relaxed_projections.core.errors import InputError, NumericalAnomalyError
from relaxed_projections.core.subspaces import AffineSubspace, LinearSubspace, canonicalize_affine, project_affine


def _lines_through(z: np.ndarray, directions) -> list[AffineSubspace]:
    return [canonicalize_affine(z, [np.asarray(v, dtype=float)]) for v in directions]


# -------------------------
# Lambda rules and schedules
# -------------------------

@pytest.mark.parametrize("cap", [0.0, 2.0, -1.0, 2.5])
def test_lambda_rule_rejects_cap(cap):
    with pytest.raises(InputError):
        LambdaRule.fixed(cap)


def test_lambda_rule_values_checked():
    with pytest.raises(InputError):
        LambdaRule.varying(1.0, values=[0.5, 1.2])
    rule = LambdaRule.varying(1.0, values=[0.0, 0.5, 1.0])
    assert np.array_equal(rule.lambdas(3), [0.0, 0.5, 1.0])
    with pytest.raises(InputError):
        rule.lambdas(4)


def test_random_varying_lambdas_within_cap():
    rule = LambdaRule.varying(1.5, seed=3)
    lambdas = rule.lambdas(10_000)
    assert lambdas.min() >= 0.0
    assert lambdas.max() <= 1.5
    assert np.array_equal(lambdas, rule.lambdas(10_000))
    mu = rule.mu(10_000)
    assert mu.min() >= 0.0 and mu.max() <= 1.0


def test_cyclic_indices():
    assert list(Schedule.cyclic(LambdaRule.fixed(1.0)).indices_for(3, 7)) == [0, 1, 2, 0, 1, 2, 0]


def test_random_indices_are_deterministic_and_prefix_stable():
    schedule = Schedule.random_uniform(LambdaRule.fixed(1.0), seed=11)
    long = schedule.indices_for(4, 1000)
    assert np.array_equal(schedule.indices_for(4, 100), long[:100])
    assert set(long) == {0, 1, 2, 3}
    other = Schedule.random_uniform(LambdaRule.fixed(1.0), seed=12).indices_for(4, 1000)
    assert not np.array_equal(long, other)


def test_explicit_schedule_errors():
    rule = LambdaRule.fixed(1.0)
    with pytest.raises(InputError):
        Schedule.explicit([0, 1], rule).indices_for(2, 3)
    with pytest.raises(InputError):
        Schedule.explicit([0, 2], rule).indices_for(2, 2)
    with pytest.raises(InputError):
        Schedule(Schedule.cyclic(rule).kind, rule, indices=(0,))


# -------------------------
# Iteration
# -------------------------

def test_single_hyperplane_projection_is_reached_in_one_step(rng):
    A = canonicalize_affine([0.0, 0.0, 3.0], [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])])
    x0 = rng.standard_normal(3)
    trace = iterate([A], Schedule.cyclic(LambdaRule.fixed(1.0)), x0, 5)
    assert np.allclose(trace.iterates[1], project_affine(A, x0))
    assert np.allclose(trace.iterates[1:], trace.iterates[1])
    assert trace.n_steps == 5
    assert np.array_equal(trace.x0, x0)


@pytest.mark.parametrize("kind", ["cyclic", "random"])
def test_consistent_collection_is_fejer_monotone(rng, kind):
    z = np.array([2.0, -1.0, 0.5])
    collection = _lines_through(z, rng.standard_normal((3, 3)))
    rule = LambdaRule.fixed(1.0)
    schedule = Schedule.cyclic(rule) if kind == "cyclic" else Schedule.random_uniform(rule, seed=5)
    trace = iterate(collection, schedule, 10 * rng.standard_normal(3), 500)
    distances = fejer_profile(trace, z)
    assert is_fejer_monotone(distances)
    assert distances[-1] < distances[0]


@pytest.mark.parametrize("lam", [0.3, 1.7])
def test_relaxed_steps_are_fejer_monotone_too(rng, lam):
    z = np.array([1.0, 1.0])
    collection = _lines_through(z, [[1.0, 0.0], [1.0, 2.0]])
    trace = iterate(collection, Schedule.random_uniform(LambdaRule.fixed(lam), seed=1), [5.0, -3.0], 300)
    assert is_fejer_monotone(fejer_profile(trace, z))


def test_varying_rule_with_constant_values_matches_fixed(rng, random_collection):
    collection = random_collection(4, 3, scale=2.0)
    x0 = rng.standard_normal(4)
    fixed = iterate(collection, Schedule.random_uniform(LambdaRule.fixed(0.8), seed=9), x0, 200)
    varying = iterate(collection, Schedule.random_uniform(LambdaRule.varying(0.8, values=[0.8] * 200), seed=9), x0, 200)
    assert np.array_equal(fixed.chosen_indices, varying.chosen_indices)
    assert np.array_equal(fixed.iterates, varying.iterates)


def test_zero_steps_keeps_only_x0():
    A = AffineSubspace.linear(LinearSubspace.full(2))
    trace = iterate([A], Schedule.cyclic(LambdaRule.fixed(1.0)), [1.0, 2.0], 0)
    assert trace.iterates.shape == (1, 2)
    assert trace.norms[0] == pytest.approx(np.sqrt(5))


def test_norms_only_trace(random_collection):
    collection = random_collection(3, 2)
    trace = iterate(collection, Schedule.cyclic(LambdaRule.fixed(1.0)), np.ones(3), 50, store_iterates=False)
    assert trace.iterates is None
    assert trace.norms.shape == (51,)
    assert trace.final.shape == (3,)
    with pytest.raises(InputError):
        trace.x0
    with pytest.raises(InputError):
        fejer_profile(trace, np.zeros(3))


def test_iterate_rejects_bad_input(random_collection):
    collection = random_collection(3, 2)
    schedule = Schedule.cyclic(LambdaRule.fixed(1.0))
    with pytest.raises(InputError):
        iterate(collection, schedule, np.ones(4), 5)
    with pytest.raises(InputError):
        iterate(collection, schedule, np.ones(3), -1)
    with pytest.raises(InputError):
        iterate([], schedule, np.ones(3), 5)


def test_overflowing_iterate_is_a_numerical_anomaly():
    A = AffineSubspace.linear(LinearSubspace.full(2))
    with pytest.raises(NumericalAnomalyError):
        iterate([A], Schedule.cyclic(LambdaRule.fixed(1.0)), [1e308, 1e308], 1)


def test_cyclic_subsequence(random_collection):
    collection = random_collection(3, 3)
    trace = iterate(collection, Schedule.cyclic(LambdaRule.fixed(1.0)), np.ones(3), 9)
    sub = cyclic_subsequence(trace, 3)
    assert sub.shape == (3, 3)
    assert np.array_equal(sub, trace.iterates[[3, 6, 9]])
    assert cyclic_subsequence(trace, 3, include_start=True).shape == (4, 3)
    with pytest.raises(InputError):
        cyclic_subsequence(trace, 0)


# -------------------------
# Unrolled iteration
# -------------------------

def test_unrolled_tail_first_term(random_collection):
    collection = random_collection(4, 3, scale=3.0)
    tail = unrolled_tail(collection, Schedule.cyclic(LambdaRule.fixed(0.7)), 0)
    assert np.allclose(tail, collection[0].translation)


@pytest.mark.parametrize("lam", [0.3, 1.0, 1.7])
def test_unrolled_tail_single_subspace_closed_form(lam):
    A = canonicalize_affine([0.0, 2.0], [np.array([1.0, 0.0])])
    schedule = Schedule.cyclic(LambdaRule.fixed(lam))
    for n in (0, 1, 5, 40):
        expected = (1 - (1 - lam) ** (n + 1)) / lam * A.translation
        assert np.allclose(unrolled_tail([A], schedule, n), expected, atol=1e-12)


@pytest.mark.parametrize("lam", [0.3, 1.0, 1.7])
def test_unrolled_iteration_matches_direct_iteration(rng, random_collection, lam):
    for trial in range(70):
        d = int(rng.integers(2, 7))
        ell = int(rng.integers(1, 5))
        n = int(rng.integers(0, 201))
        collection = random_collection(d, ell, scale=5.0)
        schedule = Schedule.random_uniform(LambdaRule.fixed(lam), seed=trial)
        x0 = 3 * rng.standard_normal(d)
        direct = iterate(collection, schedule, x0, n + 1).iterates[n + 1]
        linear, tail = unrolled_decomposition(collection, schedule, n)
        unrolled = linear @ x0 + lam * tail
        assert np.linalg.norm(direct - unrolled) <= 1e-9 * max(1.0, np.linalg.norm(direct))


def test_unrolled_needs_fixed_relaxation(random_collection):
    collection = random_collection(3, 2)
    with pytest.raises(InputError):
        unrolled_tail(collection, Schedule.cyclic(LambdaRule.varying(1.0, seed=1)), 3)
    with pytest.raises(InputError):
        unrolled_tail(collection, Schedule.cyclic(LambdaRule.fixed(1.0)), -1)


def test_linear_maps_are_nonexpansive(random_collection):
    for lam in (0.5, 1.0, 1.9):
        for R in linear_maps(random_collection(4, 3), lam):
            assert np.linalg.norm(R, 2) <= 1 + 1e-12
