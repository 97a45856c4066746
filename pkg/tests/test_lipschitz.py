import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqms.algebra import FiniteDimAlgebra, UnitalHom
from cqms.inductive import (
    LimitElement,
    PairDistances,
    constant_matrix,
    interval_example,
    sample_elements,
    sample_tower_pairs,
)
from cqms.lipschitz import (
    BoundSequences,
    IntoSpace,
    Ladder,
    compose_constant_sequences,
    dilated_interval_ladder,
    estimate_ratio_constant,
    identity_ladder,
    scaled_ladder,
    verify_iso_bounds,
    verify_universal_bound,
)
from cqms.seminorms import CommutatorSeminorm, standard_dirac

SETTINGS = settings(max_examples=15, deadline=None)


def elements(seq, per_stage, seed=0, top=None):
    top = top or seq.depth
    out = []
    for n in range(1, top + 1):
        out += sample_elements(seq, n, per_stage, seed=seed + n)
    return out


def pairs(seq, count=20, seed=0):
    return PairDistances(seq, sample_tower_pairs(seq, count, seed=seed), seq.depth)


def m3_seminorm():
    M3 = FiniteDimAlgebra.matrix(3)
    D, c = standard_dirac(M3)
    return M3, CommutatorSeminorm(M3, D, c)


def random_unitary_hom(A, rng):
    d = A.block_dims[0]
    u = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))[0]
    return UnitalHom(A, A, [[1]], block_unitaries=[u])


# -- ratio constants ----------------------------------------------------------

def test_ratio_identity_is_one():
    M3, L = m3_seminorm()
    rng = np.random.default_rng(0)
    samples = [M3.random_element(rng) for _ in range(10)]
    assert estimate_ratio_constant(UnitalHom.identity(M3), L, L, samples) == 1.0


def test_ratio_scaled_seminorm():
    M3, L = m3_seminorm()
    rng = np.random.default_rng(1)
    samples = [M3.random_element(rng) for _ in range(10)]
    assert estimate_ratio_constant(UnitalHom.identity(M3), L, L.scaled(2.5), samples) == \
        pytest.approx(2.5, abs=1e-12)


def test_ratio_interval_embedding_is_one():
    seq = interval_example(depth=3)
    fs = [e.representative for e in sample_elements(seq, 1, 20, seed=2)]
    r = estimate_ratio_constant(seq.hom(1), seq.seminorm(1), seq.seminorm(2), fs)
    assert r == pytest.approx(1.0, abs=1e-12)


def test_ratio_needs_nonscalar_sample():
    M3, L = m3_seminorm()
    with pytest.raises(ValueError):
        estimate_ratio_constant(UnitalHom.identity(M3), L, L, [M3.identity()])


# -- bound sequences ----------------------------------------------------------

def test_bound_sequences_must_be_positive():
    with pytest.raises(ValueError):
        BoundSequences([1.0, -1.0])
    with pytest.raises(ValueError):
        BoundSequences([float("inf")])


def test_compose_all_ones():
    c = compose_constant_sequences(BoundSequences([1, 1, 1], [1, 1, 1], [1, 1], [1, 1, 1]))
    assert c.products == [1, 1, 1] and c.shifted == [1, 1]
    assert c.sups["lambda_gamma"] == 1 and c.sups["alpha_beta_next"] == 1 and c.sup_product_ok


def test_compose_products():
    c = compose_constant_sequences(BoundSequences([1, 2, 3], [3, 2, 1]))
    assert c.products == [3, 4, 3] and c.sups["lambda_gamma"] == 4 <= 9 and c.sup_product_ok


def test_compose_shifted_products():
    c = compose_constant_sequences(BoundSequences(alpha=[2, 2], beta=[1, 5, 1]))
    assert c.shifted == [10, 2] and c.sups["alpha_beta_next"] == 10


def test_compose_length_mismatch():
    with pytest.raises(ValueError):
        compose_constant_sequences(BoundSequences([1, 2], [1]))
    with pytest.raises(ValueError):
        compose_constant_sequences(BoundSequences(alpha=[1, 2], beta=[1, 2]))


# -- ladders ------------------------------------------------------------------

def test_builtin_ladders_commute():
    for ladder, _ in (identity_ladder(interval_example(3)), scaled_ladder(constant_matrix(2, 3)),
                      dilated_interval_ladder(3)):
        assert ladder.consistency_problems() == []
        assert max(ladder.square_residuals()) <= 1e-10
        assert max(max(t) for t in ladder.triangle_residuals()) <= 1e-10


def test_inconsistent_ladder_refused():
    seq = constant_matrix(2, depth=2)
    rng = np.random.default_rng(3)
    A = seq.algebra(1)
    bad = Ladder(seq, seq, (UnitalHom.identity(A), random_unitary_hom(A, rng)))
    assert bad.consistency_problems()
    with pytest.raises(ValueError):
        verify_universal_bound(bad, [1.0, 1.0], elements(seq, 2), pairs(seq, 4))


def test_identity_element_has_no_violation():
    seq = interval_example(depth=2)
    ladder, b = identity_ladder(seq)
    one = [LimitElement(1, seq.algebra(1).identity())]
    rep = verify_universal_bound(ladder, b.lam, one, pairs(seq, 5))
    assert rep.rows[0].lhs_lower == 0.0 and rep.rows[0].rhs == 0.0 and not rep.violations


def test_identity_ladder_slack():
    seq = interval_example(depth=3, points_per_stage=5)
    ladder, b = identity_ladder(seq)
    P = pairs(seq, 20)
    rep = verify_iso_bounds(ladder, b, elements(seq, 5), elements(seq, 5, seed=7), P, P)
    assert not rep.violations
    for row in rep.rows:
        assert row.lhs_lower * 2 <= row.rhs + 1e-9


def test_scaled_ladder_zero_violations():
    seq = interval_example(depth=3, points_per_stage=5)
    ladder, b = scaled_ladder(seq, 3.0)
    rep = verify_iso_bounds(ladder, b, elements(seq, 6), elements(ladder.seq_B, 6, seed=5),
                            pairs(seq, 15), pairs(ladder.seq_B, 15, seed=1))
    assert not rep.violations
    assert rep.constants["sup_lambda"] == 3.0 and rep.constants["sup_gamma"] == pytest.approx(1 / 3)
    assert rep.margins("forward")["count"] > 0 and rep.margins("backward")["count"] > 0


def test_dilated_ladder_zero_violations():
    ladder, b = dilated_interval_ladder(3, 5)
    rep = verify_iso_bounds(ladder, b, elements(ladder.seq_A, 6), elements(ladder.seq_B, 6, seed=9),
                            pairs(ladder.seq_A, 15), pairs(ladder.seq_B, 15, seed=2))
    assert not rep.violations


def test_iso_bounds_need_diagonals():
    seq = interval_example(depth=2)
    ids = tuple(UnitalHom.identity(A) for A in seq.algebras)
    with pytest.raises(ValueError):
        verify_iso_bounds(Ladder(seq, seq, ids), BoundSequences([1, 1], [1, 1]), [], [],
                          pairs(seq, 2), pairs(seq, 2))


def test_into_single_space():
    seq = constant_matrix(2, depth=2)
    data = IntoSpace(seq, tuple(UnitalHom.identity(A) for A in seq.algebras), seq.seminorm(1))
    rep = verify_universal_bound(data, [1.0, 1.0], elements(seq, 5))
    assert not rep.violations


def test_sampled_provenance_labelled():
    seq = constant_matrix(2, depth=2)
    data = IntoSpace(seq, tuple(UnitalHom.identity(A) for A in seq.algebras), seq.seminorm(1))
    rep = verify_universal_bound(data, [1.0, 1.0], elements(seq, 2), provenance="sampled")
    assert rep.epistemic == "necessary_only"


# -- properties ---------------------------------------------------------------

@SETTINGS
@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_scaling_coherence(seed, c):
    M3, L = m3_seminorm()
    rng = np.random.default_rng(seed)
    psi = random_unitary_hom(M3, rng)
    samples = [M3.random_element(rng) for _ in range(6)]
    base = estimate_ratio_constant(psi, L, L, samples)
    assert abs(estimate_ratio_constant(psi, L, L.scaled(c), samples) - c * base) <= 1e-12 * c * base


@SETTINGS
@given(st.integers(0, 2**31))
def test_commutativity_residual_invariant_under_conjugation(seed):
    rng = np.random.default_rng(seed)
    seq = constant_matrix(2, depth=3)
    A = seq.algebra(1)
    skew = random_unitary_hom(A, rng)
    verts = (skew, UnitalHom.identity(A), UnitalHom.identity(A))
    base = Ladder(seq, seq, verts).square_residuals()
    w = random_unitary_hom(A, rng)
    conj = Ladder(seq, seq, tuple(v.then(w) for v in verts)).square_residuals()
    # post-composition with w conjugates each difference by a unitary
    assert np.allclose(base, conj, atol=1e-10)
