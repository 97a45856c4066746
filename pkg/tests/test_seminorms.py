import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqms.algebra import AlgElement, FiniteDimAlgebra, operator_norm
from cqms.seminorms import (
    CommutatorSeminorm,
    FiniteMetricLipschitz,
    GroupActionSeminorm,
    MetricTableError,
    check_axioms,
    clock_shift_seminorm,
    cyclic_translation_seminorm,
    line_metric,
    metric_table_problems,
    standard_dirac,
    unit_ball_membership,
)
from cqms.inductive import interval_example

SETTINGS = settings(max_examples=30, deadline=None)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)


def two_point():
    A = FiniteDimAlgebra.commutative(2)
    return A, FiniteMetricLipschitz(A, [[0, 1], [1, 0]])


def random_metric(n, rng):
    pts = rng.normal(size=(n, 2))
    return np.linalg.norm(pts[:, None] - pts[None], axis=-1)


def variants():
    rng = np.random.default_rng(11)
    A3 = FiniteDimAlgebra.commutative(3)
    M2 = FiniteDimAlgebra.matrix(2)
    return [
        FiniteMetricLipschitz(A3, random_metric(3, rng)),
        CommutatorSeminorm(M2, SIGMA_X),
        clock_shift_seminorm(3),
    ]


def test_identity_is_zero_for_every_variant():
    for L in variants():
        assert L.evaluate(L.algebra.identity()) <= 1e-12


def test_two_point_lipschitz_constant():
    A, L = two_point()
    assert L.evaluate(A.function([0, 1])) == pytest.approx(1.0, abs=1e-15)


def test_commutator_example():
    M2 = FiniteDimAlgebra.matrix(2)
    L = CommutatorSeminorm(M2, SIGMA_X)
    assert L.evaluate(AlgElement(M2, [np.diag([1.0, -1.0])])) == pytest.approx(2.0, abs=1e-12)


def test_group_action_on_cyclic_group():
    L = cyclic_translation_seminorm(4)
    f = L.algebra.function([0, 1, 2, 1])
    # one-step translation moves f by 1, two-step by 2 over length 2
    assert L.evaluate(f) == pytest.approx(1.0, abs=1e-12)


def test_unit_ball_membership_examples():
    A, L = two_point()
    assert unit_ball_membership(L, A.identity())
    assert not unit_ball_membership(L, A.function([0, 2]))
    assert unit_ball_membership(L, A.function([0, 1]))


def test_check_axioms_identity_sample():
    for L in variants():
        rep = check_axioms(L, [L.algebra.identity()])
        assert rep.max_violation <= 1e-12


def test_check_axioms_needs_samples():
    with pytest.raises(ValueError):
        check_axioms(variants()[0], [])


def test_metric_table_problems_named():
    d = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], float)
    problems = metric_table_problems(d)
    assert any("triangle" in p for p in problems)
    d2 = np.array([[0, 1], [2, 0]], float)
    assert any("(0, 1)" in p or "(0,1)" in p for p in metric_table_problems(d2))
    with pytest.raises(MetricTableError):
        FiniteMetricLipschitz(FiniteDimAlgebra.commutative(3), d)


def test_metric_needs_commutative_algebra():
    with pytest.raises(ValueError):
        FiniteMetricLipschitz(FiniteDimAlgebra.matrix(2), [[0.0]])


def test_group_lengths_must_be_positive():
    M2 = FiniteDimAlgebra.matrix(2)
    with pytest.raises(ValueError):
        GroupActionSeminorm(M2, (SIGMA_X,), (0.0,))


def test_standard_dirac_kernel_is_scalars():
    M3 = FiniteDimAlgebra.matrix(3)
    D, copies = standard_dirac(M3)
    L = CommutatorSeminorm(M3, D, copies)
    for e in M3.self_adjoint_basis():
        x = e - (np.trace(e.blocks[0]) / 3)
        if operator_norm(x) > 1e-12:
            assert L.evaluate(x) > 1e-6


def test_interval_embedding_preserves_lipschitz_constant():
    seq = interval_example(depth=4, points_per_stage=9)
    rng = np.random.default_rng(3)
    for n in range(1, seq.depth):
        for _ in range(20):
            f = seq.algebra(n).function(rng.normal(size=seq.algebra(n).num_blocks))
            assert seq.seminorm(n + 1).evaluate(seq.hom(n).apply(f)) == seq.seminorm(n).evaluate(f)


def test_scaled_seminorm():
    L = variants()[1]
    a = L.algebra.random_element(np.random.default_rng(0))
    assert L.scaled(3.0).evaluate(a) == pytest.approx(3.0 * L.evaluate(a), rel=1e-14)


def test_line_metric():
    assert np.array_equal(line_metric([0, 1, 3]), [[0, 1, 3], [1, 0, 2], [3, 2, 0]])


# -- properties ---------------------------------------------------------------

@SETTINGS
@given(st.integers(0, 2**31), st.sampled_from([0, 1, 2]))
def test_adjoint_invariance(seed, k):
    L = variants()[k]
    a = L.algebra.random_element(np.random.default_rng(seed))
    assert abs(L.evaluate(a.adjoint()) - L.evaluate(a)) <= 1e-12 * max(1.0, L.evaluate(a))


@SETTINGS
@given(st.integers(0, 2**31))
def test_commutator_leibniz(seed):
    rng = np.random.default_rng(seed)
    M3 = FiniteDimAlgebra.matrix(3)
    D, copies = standard_dirac(M3)
    L = CommutatorSeminorm(M3, D, copies)
    a, b = M3.random_element(rng), M3.random_element(rng)
    bound = operator_norm(a) * L.evaluate(b) + L.evaluate(a) * operator_norm(b)
    assert L.evaluate(a @ b) <= bound * (1 + 1e-12) + 1e-12


@SETTINGS
@given(st.integers(0, 2**31), st.complex_numbers(max_magnitude=1e3, allow_nan=False,
                                                  allow_infinity=False))
def test_group_action_gauge_invariance(seed, lam):
    L = clock_shift_seminorm(3)
    a = L.algebra.random_element(np.random.default_rng(seed))
    assert abs(L.evaluate(a + lam) - L.evaluate(a)) <= 1e-12 * max(1.0, abs(lam))


@SETTINGS
@given(st.integers(0, 2**31), st.integers(2, 6))
def test_metric_seminorm_axioms(seed, n):
    rng = np.random.default_rng(seed)
    L = FiniteMetricLipschitz(FiniteDimAlgebra.commutative(n), random_metric(n, rng) + 0.1 * (1 - np.eye(n)))
    samples = [L.algebra.random_element(rng) for _ in range(8)]
    assert check_axioms(L, samples, seed=seed).ok(1e-10)
