"""Inductive sequences of finite quantum metric spaces and their limits.

A sequence is a chain of stages (algebra, seminorm) joined by unital
homomorphisms.  Points of the limit state space are represented by finite
towers of stage states built top-down by dual pushforward, the limit metric
by the truncated weighted sum

    rho(T, S) = sum_n 2^-n t_n / (1 + t_n),   t_n = rho_{L_n}(T_n, S_n)

with a certified tail bound 2^-N, and the limit seminorm of an element by an
interval [sampled quotient, 2^n L_n(a) (1 + diam_n)].

Stages are numbered from 1 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .algebra import (
    AlgElement,
    AlgState,
    AlgebraMismatch,
    FiniteDimAlgebra,
    UnitalHom,
    compose,
    dual_pushforward,
    mix_states,
    operator_norm,
    random_pure_state,
)
from .mk import MetricResult, SolverConfig, _map, diameter_upper_bound, mk_distance
from .seminorms import (
    CommutatorSeminorm,
    FiniteMetricLipschitz,
    LipSeminorm,
    line_metric,
    standard_dirac,
)


@dataclass(frozen=True, eq=False)
class InductiveSequence:
    """Stages 1..N with connecting homs ``homs[n-1]: stage n -> stage n+1``.

    ``kind`` selects extra validation: "interval" sequences must preserve
    Lipschitz constants exactly.  ``points`` keeps grid coordinates for
    sequences built on subsets of the line.
    """

    seminorms: tuple[LipSeminorm, ...]
    homs: tuple[UnitalHom, ...]
    label: str = ""
    kind: str = "custom"
    points: tuple[np.ndarray, ...] | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "seminorms", tuple(self.seminorms))
        object.__setattr__(self, "homs", tuple(self.homs))
        if len(self.seminorms) < 1:
            raise ValueError("a sequence needs at least one stage")
        object.__setattr__(self, "_composites", {})

    @property
    def depth(self) -> int:
        return len(self.seminorms)

    @property
    def algebras(self) -> list[FiniteDimAlgebra]:
        return [L.algebra for L in self.seminorms]

    def algebra(self, n: int) -> FiniteDimAlgebra:
        return self.seminorm(n).algebra

    def seminorm(self, n: int) -> LipSeminorm:
        self._check_stage(n)
        return self.seminorms[n - 1]

    def hom(self, n: int) -> UnitalHom:
        """The connecting hom from stage n to stage n + 1."""
        if not 1 <= n < self.depth:
            raise IndexError(f"no connecting hom out of stage {n} (depth {self.depth})")
        return self.homs[n - 1]

    def composite(self, m: int, n: int) -> UnitalHom:
        """phi_{n-1} o ... o phi_m, from stage m to stage n >= m."""
        self._check_stage(m)
        self._check_stage(n)
        if n < m:
            raise ValueError(f"cannot map stage {m} down to stage {n}")
        cache = self._composites
        if (m, n) not in cache:
            if m == n:
                cache[(m, n)] = UnitalHom.identity(self.algebra(m))
            else:
                cache[(m, n)] = compose(self.hom(n - 1), self.composite(m, n - 1))
        return cache[(m, n)]

    def _check_stage(self, n: int):
        if not 1 <= n <= self.depth:
            raise IndexError(f"stage {n} out of range 1..{self.depth}")


@dataclass(frozen=True)
class StateTower:
    """(mu_1, ..., mu_N) with mu_n = dual pushforward of mu_{n+1}."""

    states: tuple[AlgState, ...]
    consistency_residual: float = 0.0

    @property
    def depth(self) -> int:
        return len(self.states)

    def at(self, n: int) -> AlgState:
        if not 1 <= n <= self.depth:
            raise IndexError(f"tower has stages 1..{self.depth}, asked for {n}")
        return self.states[n - 1]

    def evaluate(self, a: "LimitElement") -> complex:
        return self.at(a.stage).evaluate(a.representative)


@dataclass(frozen=True, eq=False)
class LimitElement:
    """An element of the limit with a representative at a finite stage."""

    stage: int
    representative: AlgElement

    def at_stage(self, seq: InductiveSequence, n: int) -> AlgElement:
        return seq.composite(self.stage, n).apply(self.representative)

    def agrees_with(self, other: "LimitElement", seq: InductiveSequence,
                    atol: float = 1e-12) -> bool:
        n = max(self.stage, other.stage)
        a, b = self.at_stage(seq, n), other.at_stage(seq, n)
        scale = max(1.0, a.norm(), b.norm())
        return a.allclose(b, atol=atol * scale)

    def shifted(self, lam: complex) -> "LimitElement":
        """a + lam * 1."""
        return LimitElement(self.stage, self.representative + lam)


def state_gap(T: StateTower, S: StateTower, a: LimitElement) -> float:
    """|mu(a) - nu(a)|, evaluated on a minus its normalised trace so that
    scalars give exactly zero."""
    x = a.representative
    dims = sum(m.shape[0] for m in x.blocks)
    c = sum(np.trace(m) for m in x.blocks) / dims
    x = x - c
    return abs(T.at(a.stage).evaluate(x) - S.at(a.stage).evaluate(x))


def tower_residual(seq: InductiveSequence, states: Sequence[AlgState]) -> float:
    """Max over matrix units b of |mu_n(b) - mu_{n+1}(phi_n(b))|."""
    res = 0.0
    for n in range(1, len(states)):
        phi = seq.hom(n)
        lo, hi = states[n - 1], states[n]
        for b in seq.algebra(n).matrix_units():
            res = max(res, abs(lo.evaluate(b) - hi.evaluate(phi.apply(b))))
    return res


def tower_from_state(seq: InductiveSequence, n: int, mu: AlgState) -> StateTower:
    seq._check_stage(n)
    if not mu.algebra.same_as(seq.algebra(n)):
        raise AlgebraMismatch(f"state on {mu.algebra.block_dims}, stage {n} is "
                              f"{seq.algebra(n).block_dims}")
    states = [mu]
    for m in range(n - 1, 0, -1):
        states.append(dual_pushforward(seq.hom(m), states[-1]))
    states.reverse()
    return StateTower(tuple(states), tower_residual(seq, states))


# -- truncated product metric -------------------------------------------------

@dataclass
class ProductMetric:
    """rho truncated at N with certified bounds.

    ``partial`` sums the stage values, ``lower`` the stage lower bounds and
    ``upper`` the stage upper bounds plus the tail 2^-N.  For constant
    sequences the tail is summed exactly into both bounds.
    """

    partial: float
    lower: float
    upper: float
    tail: float
    truncation: int
    stages: list[MetricResult] = field(default_factory=list)

    @property
    def interval(self) -> tuple[float, float]:
        return (self.partial, self.partial + self.tail)


def _squash(t: float) -> float:
    return 1.0 if math.isinf(t) else t / (1.0 + t)


def weighted_sum(values: Sequence[float]) -> float:
    """sum_n 2^-n t_n / (1 + t_n), accumulated in stage order."""
    total = 0.0
    for n, t in enumerate(values, start=1):
        total += math.ldexp(_squash(t), -n)
    return total


def stage_distances(seq: InductiveSequence, T: StateTower, S: StateTower, N: int,
                    cfg: SolverConfig | None = None, jobs: int = 1) -> list[MetricResult]:
    cfg = cfg or SolverConfig()
    if N < 1:
        raise ValueError("truncation N must be at least 1")
    if T.depth < N or S.depth < N or seq.depth < N:
        raise ValueError(f"towers of depth {T.depth}, {S.depth} and sequence of depth "
                         f"{seq.depth} cannot be truncated at {N}")
    return _map(lambda n: mk_distance(seq.seminorm(n), T.at(n), S.at(n), cfg),
                list(range(1, N + 1)), jobs)


def product_metric(seq: InductiveSequence, T: StateTower, S: StateTower, N: int,
                   cfg: SolverConfig | None = None, jobs: int = 1,
                   stages: Sequence[MetricResult] | None = None) -> ProductMetric:
    if stages is None:
        stages = stage_distances(seq, T, S, N, cfg, jobs)
    stages = list(stages)[:N]
    tail = math.ldexp(1.0, -N)
    partial = weighted_sum([r.value for r in stages])
    lower = weighted_sum([r.lower_bound for r in stages])
    upper = weighted_sum([r.upper_bound for r in stages])
    if seq.kind == "constant":
        # identity homs: every limit point is a constant tower, so the
        # stages beyond N repeat stage N and the tail sums exactly
        lower += math.ldexp(_squash(stages[-1].lower_bound), -N)
        upper += math.ldexp(_squash(stages[-1].upper_bound), -N)
    else:
        upper += tail
    return ProductMetric(partial, lower, upper, tail, N, stages)


class PairDistances:
    """Product metrics of sampled tower pairs, computed once and reused."""

    def __init__(self, seq: InductiveSequence, pairs: Sequence[tuple[StateTower, StateTower]],
                 N: int, cfg: SolverConfig | None = None, jobs: int = 1):
        self.seq, self.pairs, self.N = seq, list(pairs), N
        self.cfg = cfg or SolverConfig()
        # flatten (pair, stage) so that parallel workers see every solve
        work = [(k, n) for k in range(len(self.pairs)) for n in range(1, N + 1)]
        results = _map(lambda kn: mk_distance(seq.seminorm(kn[1]), self.pairs[kn[0]][0].at(kn[1]),
                                              self.pairs[kn[0]][1].at(kn[1]), self.cfg),
                       work, jobs)
        self.metrics = [product_metric(seq, T, S, N, stages=results[k * N:(k + 1) * N])
                        for k, (T, S) in enumerate(self.pairs)]

    def __len__(self) -> int:
        return len(self.pairs)


def pair_distances(seq, pairs, N, cfg=None, jobs=1) -> PairDistances:
    return PairDistances(seq, pairs, N, cfg, jobs)


# -- limit seminorm bounds ----------------------------------------------------

@dataclass
class SeminormLowerBound:
    value: float
    best_pair: int | None
    used: int
    skipped: list[int] = field(default_factory=list)


def limit_seminorm_lower_bound(seq: InductiveSequence, a: LimitElement,
                               towers: PairDistances | Sequence[tuple[StateTower, StateTower]],
                               N: int | None = None, cfg: SolverConfig | None = None,
                               jobs: int = 1) -> SeminormLowerBound:
    """max |mu(a) - nu(a)| / rho_upper(mu, nu) over the sampled pairs.

    Using the upper end of each rho interval makes every quotient a
    certified lower bound for the limit seminorm.  Pairs whose interval
    reaches 0 are skipped and reported.
    """
    if not isinstance(towers, PairDistances):
        towers = PairDistances(seq, towers, N or seq.depth, cfg, jobs)
    if a.stage > towers.N:
        raise ValueError(f"element at stage {a.stage} lies above truncation {towers.N}")
    best, best_k, skipped = 0.0, None, []
    for k, ((T, S), pm) in enumerate(zip(towers.pairs, towers.metrics)):
        if pm.lower <= 0.0:
            skipped.append(k)
            continue
        q = state_gap(T, S, a) / pm.upper
        if q > best:
            best, best_k = q, k
    return SeminormLowerBound(best, best_k, len(towers) - len(skipped), skipped)


_DIAM: dict[int, tuple[LipSeminorm, float]] = {}


def _diam_upper(L: LipSeminorm) -> float:
    hit = _DIAM.get(id(L))
    if hit is None or hit[0] is not L:
        hit = (L, diameter_upper_bound(L))
        _DIAM[id(L)] = hit
    return hit[1]


def prop36_upper_bound(seq: InductiveSequence, a: LimitElement) -> float:
    """2^n L_n(a) (1 + diam_n), with the certified diameter upper bound."""
    L = seq.seminorm(a.stage)
    la = L.evaluate(a.representative)
    if la == 0.0:
        return 0.0
    diam = _diam_upper(L)
    if math.isinf(diam) or math.isinf(la):
        return math.inf
    return math.ldexp(la * (1.0 + diam), a.stage)


@dataclass
class CoveringReport:
    epsilon: float
    sample_size: int
    net_size: int
    max_element_norm: float
    net: list[AlgElement] = field(default_factory=list, repr=False)


def total_boundedness_probe(seq: InductiveSequence, base: StateTower, epsilon: float,
                            sample_size: int = 200, seed: int = 0,
                            samples: Sequence[LimitElement] | None = None,
                            bound: str = "limit") -> CoveringReport:
    """Greedy epsilon-net, in operator norm at the top stage, of sampled
    elements of {a self-adjoint : L(a) <= 1, mu(a) = 0}.

    Samples are rescaled so a certified upper bound of L is at most 1:
    ``bound="limit"`` uses 2^n L_n(a)(1 + diam_n), ``bound="stage"`` uses
    L_n(a) itself (a single stage viewed as its own space).  The net size is
    a diagnostic; nothing about its growth is asserted.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    top = seq.depth
    if samples is None:
        rng = np.random.default_rng(seed)
        samples = []
        for _ in range(sample_size):
            n = int(rng.integers(1, top + 1))
            a = seq.algebra(n).random_element(rng, hermitian=True)
            samples.append(LimitElement(n, a * float(rng.uniform())))
    net: list[np.ndarray] = []
    net_elems: list[AlgElement] = []
    biggest = 0.0
    for a in samples:
        if bound == "limit":
            ub = prop36_upper_bound(seq, a)
        else:
            ub = seq.seminorm(a.stage).evaluate(a.representative)
        if math.isinf(ub):
            continue
        x = a.representative.real_part()
        if ub > 1.0:
            x = x / ub
        x = LimitElement(a.stage, x).at_stage(seq, top)
        x = x - base.at(top).evaluate(x).real
        biggest = max(biggest, operator_norm(x))
        if all(operator_norm(x - c) > epsilon for c in net_elems):
            net_elems.append(x)
    return CoveringReport(epsilon, len(samples), len(net_elems), biggest, net_elems)


# -- validation ---------------------------------------------------------------

@dataclass
class Check:
    name: str
    stage: int
    ok: bool
    value: float = 0.0
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def worst(self, name: str) -> float:
        return max((c.value for c in self.checks if c.name == name), default=0.0)


def validate_sequence(seq: InductiveSequence, n_samples: int = 20, seed: int = 0,
                      atol: float = 1e-12) -> ValidationReport:
    """Chaining, unitality, *-homomorphism identities and domain preservation
    for every connecting hom; for interval sequences also exact preservation
    of Lipschitz constants."""
    rep = ValidationReport()
    rng = np.random.default_rng(seed)
    if len(seq.homs) != seq.depth - 1:
        rep.checks.append(Check("hom_count", 0, False, detail=(
            f"{len(seq.homs)} homs for {seq.depth} stages")))
        return rep
    for n in range(1, seq.depth):
        phi = seq.hom(n)
        A, B = seq.algebra(n), seq.algebra(n + 1)
        chained = phi.source.same_as(A) and phi.target.same_as(B)
        rep.checks.append(Check("chaining", n, chained, detail="" if chained else (
            f"hom {phi.source.block_dims}->{phi.target.block_dims} between stages "
            f"{A.block_dims} and {B.block_dims}")))
        if not chained:
            continue
        defects = phi.unitality_defects()
        rep.checks.append(Check("unitality", n, not defects, float(len(defects)), "; ".join(
            f"target block {j} receives size {got}, needs {want}" for j, got, want in defects)))
        if defects:
            continue
        one = phi.apply(A.identity())
        err = max(float(np.max(np.abs(x - y))) for x, y in zip(one.blocks, B.identity().blocks))
        rep.checks.append(Check("identity", n, err <= atol, err))
        err_star = err_mult = 0.0
        for _ in range(n_samples):
            a, b = A.random_element(rng), A.random_element(rng)
            pa, pb = phi.apply(a), phi.apply(b)
            err_star = max(err_star, _maxdiff(phi.apply(a.adjoint()), pa.adjoint()))
            err_mult = max(err_mult, _maxdiff(phi.apply(a @ b), pa @ pb) / max(1.0, a.norm() * b.norm()))
        rep.checks.append(Check("adjoint", n, err_star <= atol, err_star))
        rep.checks.append(Check("multiplicative", n, err_mult <= 1e-10, err_mult))
        La, Lb = seq.seminorm(n), seq.seminorm(n + 1)
        lost = [k for k, b in enumerate(A.self_adjoint_basis())
                if math.isfinite(La.evaluate(b)) and not math.isfinite(Lb.evaluate(phi.apply(b)))]
        rep.checks.append(Check("domain", n, not lost, float(len(lost)),
                                f"basis elements {lost} leave the domain" if lost else ""))
        if seq.kind == "interval":
            worst = 0.0
            for f in interval_test_functions(seq, n, n_samples, rng):
                lf = La.evaluate(f)
                worst = max(worst, abs(Lb.evaluate(phi.apply(f)) - lf) / max(1.0, lf))
            rep.checks.append(Check("lipschitz_preserved", n, worst <= atol, worst))
    return rep


def _maxdiff(a: AlgElement, b: AlgElement) -> float:
    return max(float(np.max(np.abs(x - y))) if x.size else 0.0 for x, y in zip(a.blocks, b.blocks))


# -- sampling -----------------------------------------------------------------

def sample_states(algebra: FiniteDimAlgebra, count: int, rng: np.random.Generator) -> list[AlgState]:
    """Pure states, the maximally mixed state and Dirichlet mixtures of pure states."""
    out = [AlgState.maximally_mixed(algebra)]
    while len(out) < count:
        r = rng.uniform()
        if r < 0.5:
            out.append(random_pure_state(algebra, rng))
        else:
            k = int(rng.integers(2, 5))
            pure = [random_pure_state(algebra, rng) for _ in range(k)]
            out.append(mix_states(pure, rng.dirichlet(np.ones(k))))
    return out[:count]


def sample_tower_pairs(seq: InductiveSequence, count: int, seed: int = 0,
                       N: int | None = None) -> list[tuple[StateTower, StateTower]]:
    """Tower pairs built at stage N; about a quarter are nearby pairs
    (mu, mu + s (nu - mu)) with small s, which probe the seminorm locally."""
    N = N or seq.depth
    rng = np.random.default_rng(seed)
    alg = seq.algebra(N)
    pairs = []
    pool = sample_states(alg, max(8, count // 2), rng)
    while len(pairs) < count:
        i, j = rng.choice(len(pool), size=2, replace=False)
        mu, nu = pool[i], pool[j]
        if rng.uniform() < 0.25:
            s = float(10.0 ** rng.uniform(-3, -0.5))
            nu = mix_states([mu, nu], [1.0 - s, s])
        if mu.allclose(nu, atol=1e-14):
            continue
        pairs.append((tower_from_state(seq, N, mu), tower_from_state(seq, N, nu)))
    return pairs


def sample_elements(seq: InductiveSequence, n: int, count: int, seed: int = 0,
                    hermitian: bool = False) -> list[LimitElement]:
    """Test elements at stage n: the identity, then random ones (for interval
    sequences, random piecewise-linear functions and the coordinate)."""
    rng = np.random.default_rng(seed)
    alg = seq.algebra(n)
    out = [LimitElement(n, alg.identity())]
    if seq.kind == "interval":
        out.append(LimitElement(n, alg.function(seq.points[n - 1])))
        out += [LimitElement(n, f) for f in interval_test_functions(seq, n, count, rng)]
    while len(out) < count:
        out.append(LimitElement(n, alg.random_element(rng, hermitian=hermitian)))
    return out[:count]


def interval_test_functions(seq: InductiveSequence, n: int, count: int,
                            rng: np.random.Generator) -> list[AlgElement]:
    """Random piecewise-linear functions sampled on the stage-n grid: random
    breakpoints in [0, max grid point] with random values, interpolated."""
    x = np.asarray(seq.points[n - 1])
    alg = seq.algebra(n)
    out = []
    for _ in range(count):
        k = int(rng.integers(2, 7))
        knots = np.sort(np.concatenate([[0.0, x[-1]], rng.uniform(0, x[-1], size=k - 2)]))
        vals = rng.normal(size=k)
        out.append(alg.function(np.interp(x, knots, vals)))
    return out


# -- builtin sequences --------------------------------------------------------

def interval_grids(depth: int, points_per_stage: int = 9, new_points: int = 6) -> list[np.ndarray]:
    """Nested grids: X_1 has ``points_per_stage`` uniform points on [0, 1/2];
    X_{n+1} adds ``new_points`` uniform points in (1 - 1/(n+1), 1 - 1/(n+2)]."""
    if depth < 1 or points_per_stage < 2 or new_points < 1:
        raise ValueError("need depth >= 1, points_per_stage >= 2 and new_points >= 1")
    grids = [np.linspace(0.0, 0.5, points_per_stage)]
    for n in range(1, depth):
        a, b = 1.0 - 1.0 / (n + 1), 1.0 - 1.0 / (n + 2)
        extra = a + (b - a) * np.arange(1, new_points + 1) / new_points
        grids.append(np.concatenate([grids[-1], extra]))
    return grids


def interval_example(depth: int = 4, points_per_stage: int = 9, scale: float = 1.0,
                     new_points: int = 6) -> InductiveSequence:
    """C(X_n) with the Lipschitz seminorm of the metric scale * |x - y|;
    each hom extends a function by its value at the right end of X_n."""
    grids = interval_grids(depth, points_per_stage, new_points)
    algs = [FiniteDimAlgebra.commutative(len(x), f"C(X_{n})") for n, x in enumerate(grids, 1)]
    sems = [FiniteMetricLipschitz(A, scale * line_metric(x)) for A, x in zip(algs, grids)]
    homs = []
    for n in range(depth - 1):
        m = len(grids[n])
        point_map = [min(j, m - 1) for j in range(len(grids[n + 1]))]
        homs.append(UnitalHom.from_point_map(algs[n], algs[n + 1], point_map))
    label = f"interval_example(depth={depth}, points_per_stage={points_per_stage}, scale={scale:g})"
    return InductiveSequence(tuple(sems), tuple(homs), label, "interval", tuple(grids))


def constant_metric(metric: np.ndarray | None = None, depth: int = 3) -> InductiveSequence:
    """A fixed finite metric space (default: two points at distance 1) with
    identity homs."""
    d = np.array([[0.0, 1.0], [1.0, 0.0]]) if metric is None else np.asarray(metric, float)
    A = FiniteDimAlgebra.commutative(d.shape[0], f"C({d.shape[0]} points)")
    L = FiniteMetricLipschitz(A, d)
    return InductiveSequence((L,) * depth, (UnitalHom.identity(A),) * (depth - 1),
                             f"constant_metric(points={d.shape[0]}, depth={depth})", "constant")


def constant_matrix(k: int = 2, depth: int = 3, dirac: np.ndarray | None = None,
                    copies: int | None = None) -> InductiveSequence:
    """M_k with a commutator seminorm at every stage and identity homs."""
    A = FiniteDimAlgebra.matrix(k, f"M_{k}")
    if dirac is None:
        dirac, copies = standard_dirac(A)
    L = CommutatorSeminorm(A, dirac, copies or 1)
    return InductiveSequence((L,) * depth, (UnitalHom.identity(A),) * (depth - 1),
                             f"constant_matrix(k={k}, depth={depth})", "constant")


def uhf_like(depth: int = 3, diracs: Sequence[np.ndarray] | None = None) -> InductiveSequence:
    """M_{2^n} with a -> a (+) a.  Stage Dirac elements are user supplied;
    by default each stage uses the standard two-copy Dirac element."""
    algs = [FiniteDimAlgebra.matrix(2 ** n, f"M_{2 ** n}") for n in range(1, depth + 1)]
    sems = []
    for n, A in enumerate(algs):
        if diracs is None:
            D, copies = standard_dirac(A)
        else:
            D = np.asarray(diracs[n])
            copies = D.shape[0] // A.hilbert_dim
        sems.append(CommutatorSeminorm(A, D, copies))
    homs = [UnitalHom(algs[n], algs[n + 1], np.array([[2]])) for n in range(depth - 1)]
    notes = () if diracs is not None else ("default Dirac elements are an artifact choice",)
    return InductiveSequence(tuple(sems), tuple(homs), f"uhf_like(depth={depth})", "uhf",
                             notes=notes)


BUILTINS = {
    "interval_example": interval_example,
    "constant_metric": constant_metric,
    "constant_matrix": constant_matrix,
    "uhf_like": uhf_like,
}
