import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import wasserstein_distance

from cqms.algebra import AlgState, FiniteDimAlgebra, random_mixed_state, random_pure_state
from cqms.mk import (
    SolverConfig,
    SolverError,
    diameter,
    diameter_upper_bound,
    distance_matrix,
    kantorovich_duality_gap,
    mk_distance,
)
from cqms.seminorms import (
    CommutatorSeminorm,
    FiniteMetricLipschitz,
    clock_shift_seminorm,
    line_metric,
    standard_dirac,
)

SETTINGS = settings(max_examples=25, deadline=None)
SIGMA = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]]),
    "z": np.diag([1.0, -1.0]).astype(complex),
}
SG = SolverConfig("supergradient")


def bloch_state(M2, r):
    rho = (np.eye(2) + sum(c * SIGMA[k] for c, k in zip(r, "xyz"))) / 2
    return AlgState(M2, [1.0], [rho])


def sigma_x_seminorm():
    M2 = FiniteDimAlgebra.matrix(2)
    return M2, CommutatorSeminorm(M2, SIGMA["x"])


def two_point():
    A = FiniteDimAlgebra.commutative(2)
    return A, FiniteMetricLipschitz(A, [[0, 1], [1, 0]])


def test_equal_states_give_zero():
    A, L = two_point()
    mu = AlgState.from_probabilities(A, [0.2, 0.8])
    for method in ("dual_lp", "primal_transport_lp", "supergradient"):
        assert mk_distance(L, mu, mu, SolverConfig(method)).value == 0.0


def test_two_point_dirac_distance():
    A, L = two_point()
    for method in ("dual_lp", "primal_transport_lp"):
        r = mk_distance(L, AlgState.dirac(A, 0), AlgState.dirac(A, 1), SolverConfig(method))
        assert r.value == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("p,q", [(0.1, 0.9), (0.5, 0.25), (0.33, 0.34)])
def test_two_point_mixtures(p, q):
    A, L = two_point()
    mu = AlgState.from_probabilities(A, [p, 1 - p])
    nu = AlgState.from_probabilities(A, [q, 1 - q])
    assert mk_distance(L, mu, nu, SolverConfig("dual_lp")).value == pytest.approx(abs(p - q), abs=1e-12)
    assert mk_distance(L, mu, nu, SolverConfig("primal_transport_lp")).value == pytest.approx(abs(p - q), abs=1e-12)


def test_line_metric_against_scipy_wasserstein():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(3, 9))
        x = np.sort(rng.uniform(0, 5, size=n))
        A = FiniteDimAlgebra.commutative(n)
        L = FiniteMetricLipschitz(A, line_metric(x))
        p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        r = mk_distance(L, AlgState.from_probabilities(A, p), AlgState.from_probabilities(A, q))
        assert r.value == pytest.approx(wasserstein_distance(x, x, p, q), abs=1e-9)


def test_lp_methods_need_a_metric():
    M2, L = sigma_x_seminorm()
    mu, nu = bloch_state(M2, (0, 0, 1)), bloch_state(M2, (0, 0, -1))
    with pytest.raises(SolverError):
        mk_distance(L, mu, nu, SolverConfig("dual_lp"))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig("newton")
    with pytest.raises(ValueError):
        SolverConfig(tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)


def test_m2_sigma_x_grid_and_closed_form():
    # [sigma_x, y sigma_y + z sigma_z] has norm 2 |(y, z)|, so the distance is
    # half the length of the (y, z) part of the Bloch difference
    M2, L = sigma_x_seminorm()
    mu, nu = bloch_state(M2, (0, 0, 1)), bloch_state(M2, (0, 0, -1))
    grid = mk_distance(L, mu, nu, SolverConfig("brute_force_grid", grid_resolution=201))
    sg = mk_distance(L, mu, nu, SG)
    assert grid.lower_bound <= 1.0 + 1e-12 <= grid.upper_bound + 2e-12
    assert sg.value == pytest.approx(1.0, abs=1e-6)


def test_m2_sigma_x_infinite_when_kernel_direction_differs():
    M2, L = sigma_x_seminorm()
    r = mk_distance(L, bloch_state(M2, (1, 0, 0)), bloch_state(M2, (-1, 0, 0)), SG)
    assert math.isinf(r.value) and r.infinite


def test_supergradient_matches_metric_lp_on_commutative_case():
    rng = np.random.default_rng(1)
    A = FiniteDimAlgebra.commutative(4)
    L = FiniteMetricLipschitz(A, line_metric([0, 1, 1.5, 4]))
    mu, nu = random_mixed_state(A, rng), random_mixed_state(A, rng)
    exact = mk_distance(L, mu, nu, SolverConfig("dual_lp")).value
    r = mk_distance(L, mu, nu, SG)
    assert r.lower_bound - 1e-9 <= exact <= r.upper_bound + 1e-9


def test_diameter_examples():
    _, L = two_point()
    assert diameter(L).value == 1.0
    x = np.linspace(0, 1, 11)
    Lg = FiniteMetricLipschitz(FiniteDimAlgebra.commutative(11), line_metric(x))
    assert diameter(Lg).value == pytest.approx(1.0, abs=1e-9)
    L1 = FiniteMetricLipschitz(FiniteDimAlgebra.commutative(1), [[0.0]])
    assert diameter(L1).value == 0.0


def test_diameter_matrix_case_brackets_sampled_distances():
    M2 = FiniteDimAlgebra.matrix(2)
    D, copies = standard_dirac(M2)
    L = CommutatorSeminorm(M2, D, copies)
    res = diameter(L, n_pairs=4)
    assert res.lower_bound <= res.upper_bound
    assert res.upper_bound == diameter_upper_bound(L)
    rng = np.random.default_rng(2)
    for _ in range(3):
        r = mk_distance(L, random_pure_state(M2, rng), random_pure_state(M2, rng), SG)
        assert r.lower_bound <= res.upper_bound + 1e-9


def test_diameter_flags_unbounded_ball():
    _, L = sigma_x_seminorm()
    assert diameter(L).infinite


def test_duality_gap_examples():
    A = FiniteDimAlgebra.commutative(3)
    d = line_metric([0, 1, 2])
    rep = kantorovich_duality_gap(d, AlgState.dirac(A, 0), AlgState.dirac(A, 2))
    assert rep.dual_optimum == pytest.approx(2.0, abs=1e-12) and rep.primal_optimum == pytest.approx(2.0, abs=1e-12)
    same = kantorovich_duality_gap(d, AlgState.dirac(A, 0), AlgState.dirac(A, 0))
    assert same.gap == 0.0 and same.dual_optimum == 0.0 and same.primal_optimum == 0.0
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(5, 2))
    d5 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    B = FiniteDimAlgebra.commutative(5)
    rep5 = kantorovich_duality_gap(d5, random_mixed_state(B, rng), random_mixed_state(B, rng))
    assert rep5.gap <= 1e-8 and rep5.ok


def test_distance_matrix_symmetric_zero_diagonal():
    A = FiniteDimAlgebra.commutative(3)
    L = FiniteMetricLipschitz(A, line_metric([0, 1, 3]))
    states = [AlgState.dirac(A, i) for i in range(3)]
    m = distance_matrix(L, states, jobs=2)
    vals = np.array([[r.value for r in row] for row in m])
    assert np.array_equal(vals, vals.T)
    assert np.all(np.diag(vals) == 0)
    assert vals[0, 2] == pytest.approx(3.0)


# -- properties ---------------------------------------------------------------

@st.composite
def matrix_case(draw):
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    M2 = FiniteDimAlgebra.matrix(2)
    D, copies = standard_dirac(M2)
    L = CommutatorSeminorm(M2, D, copies)
    states = [random_mixed_state(M2, rng) if seed % 2 else random_pure_state(M2, rng)
              for _ in range(3)]
    return L, states


@settings(max_examples=10, deadline=None)
@given(matrix_case())
def test_symmetry_and_witness_feasibility(data):
    L, (mu, nu, _) = data
    ab, ba = mk_distance(L, mu, nu, SG), mk_distance(L, nu, mu, SG)
    assert ab.value == ba.value
    assert ab.lower_bound <= ab.value <= ab.upper_bound
    w = ab.witness
    assert L.evaluate(w) <= 1 + SG.tol
    assert abs((mu.evaluate(w) - nu.evaluate(w)).real - ab.lower_bound) <= SG.tol
    assert abs(mu.evaluate(w)) <= 1e-12


@settings(max_examples=10, deadline=None)
@given(matrix_case())
def test_triangle_inequality_matrix(data):
    L, (mu, nu, sigma) = data
    d = lambda a, b: mk_distance(L, a, b, SG)
    assert d(mu, sigma).lower_bound <= d(mu, nu).upper_bound + d(nu, sigma).upper_bound + 3 * SG.tol


@SETTINGS
@given(st.integers(0, 2**31), st.integers(3, 8))
def test_dual_primal_agreement(seed, n):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 3))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    A = FiniteDimAlgebra.commutative(n)
    rep = kantorovich_duality_gap(d, random_mixed_state(A, rng), random_mixed_state(A, rng))
    assert rep.gap <= 1e-8


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31))
def test_group_action_distance_certified(seed):
    rng = np.random.default_rng(seed)
    L = clock_shift_seminorm(2)
    M2 = L.algebra
    r = mk_distance(L, random_pure_state(M2, rng), random_pure_state(M2, rng), SG)
    assert 0.0 <= r.lower_bound <= r.value <= r.upper_bound
