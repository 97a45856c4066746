"""Lip-seminorm evaluators.

Every seminorm here has the form ``L(a) = max_k ||T_k(a)||`` for complex-linear
maps ``T_k`` into matrices (2-D arrays, operator norm) or diagonals (1-D
arrays, sup norm).  ``components`` exposes the ``T_k``; the metric solvers
build their linear programs and dual certificates from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .algebra import AlgElement, AlgebraMismatch, FiniteDimAlgebra

INF = math.inf


def opnorm(x: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    if x.ndim == 1:
        return float(np.max(np.abs(x)))
    return float(np.linalg.norm(x, 2))


def nuclear_norm(x: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    if x.ndim == 1:
        return float(np.sum(np.abs(x)))
    return float(np.sum(np.linalg.svd(x, compute_uv=False)))


class MetricTableError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def metric_table_problems(d: np.ndarray, atol: float = 1e-12) -> list[str]:
    """Every way ``d`` fails to be a metric, with the offending points named."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        return [f"metric table is not square: shape {d.shape}"]
    n = d.shape[0]
    problems = []
    for i in range(n):
        if abs(d[i, i]) > atol:
            problems.append(f"d({i},{i}) = {d[i, i]:g} is not zero")
    for i in range(n):
        for j in range(i + 1, n):
            if abs(d[i, j] - d[j, i]) > atol:
                problems.append(f"asymmetric pair ({i},{j}): d({i},{j}) = {d[i, j]:g} "
                                f"but d({j},{i}) = {d[j, i]:g}")
            if min(d[i, j], d[j, i]) <= 0:
                problems.append(f"d({i},{j}) must be positive")
    if problems:
        return problems
    # d(i,j) <= d(i,k) + d(k,j); report the worst k for each violating pair
    via = d[:, :, None] + d[None, :, :]  # via[i,k,j]
    best = via.min(axis=1)
    arg = via.argmin(axis=1)
    for i in range(n):
        for j in range(i + 1, n):
            if d[i, j] > best[i, j] + atol * max(1.0, d[i, j]):
                k = int(arg[i, j])
                problems.append(f"triangle inequality fails for ({i},{j}) via {k}: "
                                f"d({i},{j}) = {d[i, j]:g} > {d[i, k]:g} + {d[k, j]:g}")
    return problems


class LipSeminorm:
    """Base class; subclasses provide ``algebra`` and ``components``."""

    algebra: FiniteDimAlgebra
    kind = "abstract"

    def components(self, a: AlgElement) -> list[np.ndarray]:
        raise NotImplementedError

    def evaluate(self, a: AlgElement) -> float:
        if not a.algebra.same_as(self.algebra):
            raise AlgebraMismatch(
                f"seminorm on {self.algebra.block_dims}, element on {a.algebra.block_dims}")
        return max((opnorm(c) for c in self.components(a)), default=0.0)

    __call__ = evaluate

    def scaled(self, factor: float) -> "LipSeminorm":
        return ScaledSeminorm(self, factor)


@dataclass(frozen=True, eq=False)
class FiniteMetricLipschitz(LipSeminorm):
    """Lipschitz constant of a function on a finite metric space."""

    algebra: FiniteDimAlgebra
    metric: np.ndarray
    kind = "metric"

    def __post_init__(self):
        if not self.algebra.is_commutative:
            raise AlgebraMismatch("a metric seminorm needs a commutative algebra")
        d = np.array(self.metric, dtype=float)
        if d.shape != (self.algebra.num_blocks,) * 2:
            raise AlgebraMismatch(
                f"metric table {d.shape} does not match {self.algebra.num_blocks} points")
        problems = metric_table_problems(d)
        if problems:
            raise MetricTableError(problems)
        d.setflags(write=False)
        object.__setattr__(self, "metric", d)
        i, j = np.triu_indices(d.shape[0], k=1)
        object.__setattr__(self, "_pairs", (i, j, 1.0 / d[i, j]))

    def components(self, a):
        i, j, inv = self._pairs
        f = a.values()
        return [(f[i] - f[j]) * inv]

    def lipschitz_constant(self, f: np.ndarray) -> float:
        i, j, inv = self._pairs
        f = np.asarray(f)
        if i.size == 0:
            return 0.0
        return float(np.max(np.abs(f[i] - f[j]) * inv))


@dataclass(frozen=True, eq=False)
class CommutatorSeminorm(LipSeminorm):
    """||[D, pi(a)]|| with pi(a) = copies of the block-diagonal matrix of a."""

    algebra: FiniteDimAlgebra
    dirac: np.ndarray
    copies: int = 1
    kind = "commutator"

    def __post_init__(self):
        n = self.algebra.hilbert_dim * self.copies
        D = np.array(self.dirac, dtype=np.complex128)
        if D.shape != (n, n):
            raise AlgebraMismatch(f"Dirac element must be {n}x{n}, got {D.shape}")
        if not np.allclose(D, D.conj().T, atol=1e-12):
            raise ValueError("Dirac element must be self-adjoint")
        D.setflags(write=False)
        object.__setattr__(self, "dirac", D)

    def represent(self, a: AlgElement) -> np.ndarray:
        m = a.as_matrix()
        return np.kron(np.eye(self.copies), m) if self.copies > 1 else m

    def components(self, a):
        x = self.represent(a)
        return [self.dirac @ x - x @ self.dirac]


@dataclass(frozen=True, eq=False)
class GroupActionSeminorm(LipSeminorm):
    """max over g != e of ||alpha_g(a) - a|| / length(g), alpha_g = Ad(U_g)."""

    algebra: FiniteDimAlgebra
    unitaries: tuple
    lengths: tuple
    kind = "group"

    def __post_init__(self):
        n = self.algebra.hilbert_dim
        us = []
        for u in self.unitaries:
            u = np.array(u, dtype=np.complex128)
            if u.shape != (n, n) or not np.allclose(u @ u.conj().T, np.eye(n), atol=1e-10):
                raise ValueError(f"group elements must be {n}x{n} unitaries")
            u.setflags(write=False)
            us.append(u)
        ls = tuple(float(x) for x in self.lengths)
        if len(ls) != len(us):
            raise ValueError("one length per non-identity group element")
        if any(not x > 0 for x in ls):
            raise ValueError("lengths of non-identity elements must be positive")
        object.__setattr__(self, "unitaries", tuple(us))
        object.__setattr__(self, "lengths", ls)
        mask = self.algebra.zero().as_matrix() == 0
        pos = 0
        for d in self.algebra.block_dims:
            mask[pos:pos + d, pos:pos + d] = False
            pos += d
        for u in us:
            for e in self.algebra.matrix_units():
                y = u @ e.as_matrix() @ u.conj().T
                if np.abs(y[mask]).max(initial=0.0) > 1e-10:
                    raise ValueError("Ad(U_g) does not preserve the algebra")

    def act(self, g: int, a: AlgElement) -> AlgElement:
        u = self.unitaries[g]
        y = u @ a.as_matrix() @ u.conj().T
        blocks, pos = [], 0
        for d in self.algebra.block_dims:
            blocks.append(y[pos:pos + d, pos:pos + d])
            pos += d
        return AlgElement(self.algebra, blocks)

    def components(self, a):
        x = a.as_matrix()
        return [(u @ x @ u.conj().T - x) / ell for u, ell in zip(self.unitaries, self.lengths)]


@dataclass(frozen=True, eq=False)
class ScaledSeminorm(LipSeminorm):
    """factor * base."""

    base: LipSeminorm
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("scale factor must be positive")

    @property
    def algebra(self):
        return self.base.algebra

    @property
    def kind(self):
        return self.base.kind

    def components(self, a):
        return [self.factor * c for c in self.base.components(a)]

    def scaled(self, factor):
        return ScaledSeminorm(self.base, self.factor * factor)


def base_metric(L: LipSeminorm) -> np.ndarray | None:
    """Metric table behind a (possibly scaled) metric seminorm, else None."""
    if isinstance(L, FiniteMetricLipschitz):
        return L.metric
    if isinstance(L, ScaledSeminorm):
        d = base_metric(L.base)
        return None if d is None else d / L.factor
    return None


def line_metric(points: Sequence[float]) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    return np.abs(x[:, None] - x[None, :])


def standard_dirac(algebra: FiniteDimAlgebra) -> tuple[np.ndarray, int]:
    """A Dirac element on two copies of the defining representation whose
    commutator seminorm vanishes only on scalars.

    D = [[Lam, J], [J, -Lam]] with Lam = diag(1..n) and J the path adjacency
    matrix: [D, a+a] = 0 forces a to commute with both, hence to be scalar.
    """
    n = algebra.hilbert_dim
    lam = np.diag(np.arange(1, n + 1, dtype=float))
    J = np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    D = np.block([[lam, J], [J, -lam]]).astype(np.complex128)
    return D, 2


def cyclic_translation_seminorm(n: int, algebra: FiniteDimAlgebra | None = None) -> GroupActionSeminorm:
    """Z_n acting on C^n by translation, with the cyclic word length."""
    algebra = algebra or FiniteDimAlgebra.commutative(n, f"C(Z_{n})")
    shift = np.roll(np.eye(n), 1, axis=0)
    us, ls = [], []
    for k in range(1, n):
        us.append(np.linalg.matrix_power(shift, k))
        ls.append(min(k, n - k))
    return GroupActionSeminorm(algebra, tuple(us), tuple(ls))


def clock_shift_seminorm(p: int, algebra: FiniteDimAlgebra | None = None) -> GroupActionSeminorm:
    """The ergodic Z_p x Z_p action on M_p by clock and shift conjugation."""
    algebra = algebra or FiniteDimAlgebra.matrix(p, f"M_{p}")
    clock = np.diag(np.exp(2j * np.pi * np.arange(p) / p))
    shift = np.roll(np.eye(p), 1, axis=0)
    us, ls = [], []
    for s in range(p):
        for t in range(p):
            if s == t == 0:
                continue
            us.append(np.linalg.matrix_power(shift, s) @ np.linalg.matrix_power(clock, t))
            ls.append(min(s, p - s) + min(t, p - t))
    return GroupActionSeminorm(algebra, tuple(us), tuple(ls))


@dataclass
class AxiomReport:
    """Largest observed violation of each seminorm axiom."""

    adjoint: float = 0.0
    unit: float = 0.0
    subadditivity: float = 0.0
    homogeneity: float = 0.0
    samples: int = 0
    details: dict = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        return max(self.adjoint, self.unit, self.subadditivity, self.homogeneity)

    def ok(self, tol: float = 1e-10) -> bool:
        return self.max_violation <= tol


def check_axioms(L: LipSeminorm, samples: Sequence[AlgElement], seed: int = 0) -> AxiomReport:
    if not samples:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    vals = [L.evaluate(a) for a in samples]
    rep = AxiomReport(samples=len(samples))
    rep.unit = L.evaluate(L.algebra.identity())
    for a, la in zip(samples, vals):
        rep.adjoint = max(rep.adjoint, abs(L.evaluate(a.adjoint()) - la))
        lam = complex(rng.normal(), rng.normal())
        rep.homogeneity = max(rep.homogeneity, abs(L.evaluate(lam * a) - abs(lam) * la))
    for i, (a, la) in enumerate(zip(samples, vals)):
        for b, lb in zip(samples[i:], vals[i:]):
            rep.subadditivity = max(rep.subadditivity, L.evaluate(a + b) - la - lb)
    return rep


def unit_ball_membership(L: LipSeminorm, a: AlgElement, tol: float = 1e-12) -> bool:
    return L.evaluate(a) <= 1.0 + tol
