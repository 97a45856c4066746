"""Finite-dimensional C*-algebras as direct sums of full matrix blocks.

Everything here is immutable: arrays are copied on construction and marked
read-only, so algebras, elements, states and homomorphisms can be shared
freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ATOL = 1e-12


class AlgebraMismatch(ValueError):
    """Raised when objects living on different algebras are combined."""


def _frozen(x: np.ndarray, dtype=np.complex128) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _block_diag(mats: Sequence[np.ndarray]) -> np.ndarray:
    n = sum(m.shape[0] for m in mats)
    out = np.zeros((n, n), dtype=np.complex128)
    pos = 0
    for m in mats:
        d = m.shape[0]
        out[pos:pos + d, pos:pos + d] = m
        pos += d
    return out


@dataclass(frozen=True)
class FiniteDimAlgebra:
    """The algebra M_{d1} + ... + M_{dk}; all blocks 1x1 is C(X) on k points."""

    block_dims: tuple[int, ...]
    label: str = ""

    def __post_init__(self):
        dims = tuple(int(d) for d in self.block_dims)
        if not dims:
            raise ValueError("an algebra needs at least one block")
        if any(d < 1 for d in dims):
            raise ValueError(f"block dimensions must be positive, got {dims}")
        object.__setattr__(self, "block_dims", dims)

    @classmethod
    def commutative(cls, n_points: int, label: str = "") -> "FiniteDimAlgebra":
        return cls((1,) * n_points, label)

    @classmethod
    def matrix(cls, d: int, label: str = "") -> "FiniteDimAlgebra":
        return cls((d,), label)

    @property
    def num_blocks(self) -> int:
        return len(self.block_dims)

    @property
    def dimension(self) -> int:
        """Complex dimension, sum of d_i^2."""
        return sum(d * d for d in self.block_dims)

    @property
    def hilbert_dim(self) -> int:
        """Size of the defining block-diagonal representation."""
        return sum(self.block_dims)

    @property
    def is_commutative(self) -> bool:
        return all(d == 1 for d in self.block_dims)

    def same_as(self, other: "FiniteDimAlgebra") -> bool:
        return self.block_dims == other.block_dims

    def identity(self) -> "AlgElement":
        return AlgElement(self, [np.eye(d) for d in self.block_dims])

    def zero(self) -> "AlgElement":
        return AlgElement(self, [np.zeros((d, d)) for d in self.block_dims])

    def function(self, values: Iterable[complex]) -> "AlgElement":
        """Element of a commutative algebra from its point values."""
        if not self.is_commutative:
            raise AlgebraMismatch("function() needs a commutative algebra")
        vals = np.asarray(list(values), dtype=np.complex128)
        if vals.shape != (self.num_blocks,):
            raise ValueError(f"expected {self.num_blocks} values, got {vals.shape}")
        return AlgElement(self, [v.reshape(1, 1) for v in vals])

    def from_coefficients(self, coeffs: np.ndarray) -> "AlgElement":
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (self.dimension,):
            raise ValueError(f"expected {self.dimension} coefficients")
        blocks, pos = [], 0
        for d in self.block_dims:
            blocks.append(coeffs[pos:pos + d * d].reshape(d, d))
            pos += d * d
        return AlgElement(self, blocks)

    def matrix_units(self) -> list["AlgElement"]:
        """The complex basis E^{(b)}_{ij}."""
        basis = []
        for b, d in enumerate(self.block_dims):
            for i in range(d):
                for j in range(d):
                    blocks = [np.zeros((e, e)) for e in self.block_dims]
                    blocks[b] = np.zeros((d, d))
                    blocks[b][i, j] = 1.0
                    basis.append(AlgElement(self, blocks))
        return basis

    def self_adjoint_basis(self) -> list["AlgElement"]:
        """Real basis of the self-adjoint part, orthonormal for Re tr(a* b)."""
        basis = []
        r2 = np.sqrt(0.5)
        for b, d in enumerate(self.block_dims):
            for i in range(d):
                for j in range(i, d):
                    mats = []
                    if i == j:
                        m = np.zeros((d, d), dtype=np.complex128)
                        m[i, i] = 1.0
                        mats.append(m)
                    else:
                        m = np.zeros((d, d), dtype=np.complex128)
                        m[i, j] = m[j, i] = r2
                        mats.append(m)
                        m = np.zeros((d, d), dtype=np.complex128)
                        m[i, j] = -1j * r2
                        m[j, i] = 1j * r2
                        mats.append(m)
                    for m in mats:
                        blocks = [np.zeros((e, e)) for e in self.block_dims]
                        blocks[b] = m
                        basis.append(AlgElement(self, blocks))
        return basis

    def random_element(self, rng: np.random.Generator, hermitian: bool = False,
                       scale: float = 1.0) -> "AlgElement":
        blocks = []
        for d in self.block_dims:
            m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            if hermitian:
                m = (m + m.conj().T) / 2
            blocks.append(scale * m)
        return AlgElement(self, blocks)


class AlgElement:
    """One complex matrix per block of the parent algebra."""

    __slots__ = ("algebra", "blocks")
    __array_ufunc__ = None  # keep numpy scalars from broadcasting over elements

    def __init__(self, algebra: FiniteDimAlgebra, blocks: Sequence[np.ndarray]):
        if len(blocks) != algebra.num_blocks:
            raise AlgebraMismatch(
                f"expected {algebra.num_blocks} blocks, got {len(blocks)}")
        frozen = []
        for d, m in zip(algebra.block_dims, blocks):
            m = _frozen(m)
            if m.shape != (d, d):
                raise AlgebraMismatch(f"block shape {m.shape} does not match {d}x{d}")
            frozen.append(m)
        object.__setattr__(self, "algebra", algebra)
        object.__setattr__(self, "blocks", tuple(frozen))

    def __setattr__(self, name, value):
        raise AttributeError("AlgElement is immutable")

    def __repr__(self):
        return f"AlgElement({self.algebra.block_dims}, norm={self.norm():.4g})"

    def _check(self, other: "AlgElement"):
        if not self.algebra.same_as(other.algebra):
            raise AlgebraMismatch(
                f"{self.algebra.block_dims} vs {other.algebra.block_dims}")

    def __add__(self, other):
        if isinstance(other, AlgElement):
            self._check(other)
            return AlgElement(self.algebra, [a + b for a, b in zip(self.blocks, other.blocks)])
        return self + other * self.algebra.identity()

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, scalar):
        if isinstance(scalar, AlgElement):
            return self @ scalar
        return AlgElement(self.algebra, [scalar * a for a in self.blocks])

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other: "AlgElement"):
        self._check(other)
        return AlgElement(self.algebra, [a @ b for a, b in zip(self.blocks, other.blocks)])

    def adjoint(self) -> "AlgElement":
        return AlgElement(self.algebra, [a.conj().T for a in self.blocks])

    def real_part(self) -> "AlgElement":
        """(a + a*)/2."""
        return (self + self.adjoint()) * 0.5

    def imag_part(self) -> "AlgElement":
        """(a - a*)/2i, so that a = real_part + i*imag_part."""
        return (self - self.adjoint()) * (1 / 2j)

    def is_self_adjoint(self, atol: float = ATOL) -> bool:
        return all(np.allclose(a, a.conj().T, atol=atol, rtol=0) for a in self.blocks)

    def coefficients(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.blocks])

    def as_matrix(self) -> np.ndarray:
        """Block-diagonal matrix on the defining Hilbert space."""
        return _block_diag(self.blocks)

    def values(self) -> np.ndarray:
        """Point values of an element of a commutative algebra."""
        return np.array([b[0, 0] for b in self.blocks])

    def norm(self) -> float:
        return operator_norm(self)

    def allclose(self, other: "AlgElement", atol: float = ATOL) -> bool:
        self._check(other)
        scale = max(1.0, self.norm(), other.norm())
        return all(np.allclose(a, b, atol=atol * scale, rtol=0)
                   for a, b in zip(self.blocks, other.blocks))


def operator_norm(a: AlgElement) -> float:
    """C*-norm: the largest singular value over all blocks."""
    return max(float(np.linalg.norm(b, 2)) for b in a.blocks)


class AlgState:
    """A state sum_i w_i tr(rho_i a_i) with trace-one densities rho_i."""

    __slots__ = ("algebra", "weights", "densities")

    def __init__(self, algebra: FiniteDimAlgebra, weights: Sequence[float],
                 densities: Sequence[np.ndarray] | None = None, check: bool = True):
        w = np.array(weights, dtype=float)
        if w.shape != (algebra.num_blocks,):
            raise AlgebraMismatch(f"expected {algebra.num_blocks} weights, got {w.shape}")
        if densities is None:
            densities = [np.eye(d) / d for d in algebra.block_dims]
        if len(densities) != algebra.num_blocks:
            raise AlgebraMismatch("one density per block required")
        dens = []
        for d, rho in zip(algebra.block_dims, densities):
            rho = np.array(rho, dtype=np.complex128)
            if rho.shape != (d, d):
                raise AlgebraMismatch(f"density shape {rho.shape} does not match {d}x{d}")
            rho = (rho + rho.conj().T) / 2
            dens.append(_frozen(rho))
        if check:
            if np.any(w < -ATOL):
                raise ValueError(f"negative state weight: {w.min()}")
            if abs(w.sum() - 1.0) > 1e-10:
                raise ValueError(f"weights sum to {w.sum()}, not 1")
            for rho in dens:
                if abs(np.trace(rho).real - 1.0) > 1e-10:
                    raise ValueError("each density must have trace 1")
                if np.linalg.eigvalsh(rho).min() < -1e-10:
                    raise ValueError("density matrix is not positive")
        w = np.clip(w, 0.0, None)
        w.setflags(write=False)
        object.__setattr__(self, "algebra", algebra)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "densities", tuple(dens))

    def __setattr__(self, name, value):
        raise AttributeError("AlgState is immutable")

    def __repr__(self):
        return f"AlgState({self.algebra.block_dims}, weights={np.round(self.weights, 4)})"

    @classmethod
    def from_probabilities(cls, algebra: FiniteDimAlgebra, p: Sequence[float]) -> "AlgState":
        if not algebra.is_commutative:
            raise AlgebraMismatch("probability vectors only describe commutative states")
        return cls(algebra, p, [np.ones((1, 1))] * algebra.num_blocks)

    @classmethod
    def dirac(cls, algebra: FiniteDimAlgebra, point: int) -> "AlgState":
        p = np.zeros(algebra.num_blocks)
        p[point] = 1.0
        return cls.from_probabilities(algebra, p)

    @classmethod
    def pure(cls, algebra: FiniteDimAlgebra, block: int, vector: Sequence[complex]) -> "AlgState":
        v = np.asarray(vector, dtype=np.complex128)
        v = v / np.linalg.norm(v)
        w = np.zeros(algebra.num_blocks)
        w[block] = 1.0
        dens = [np.eye(d) / d for d in algebra.block_dims]
        dens[block] = np.outer(v, v.conj())
        return cls(algebra, w, dens)

    @classmethod
    def maximally_mixed(cls, algebra: FiniteDimAlgebra) -> "AlgState":
        """Normalised trace of the defining representation."""
        dims = np.array(algebra.block_dims, dtype=float)
        return cls(algebra, dims / dims.sum())

    @classmethod
    def from_density_element(cls, algebra: FiniteDimAlgebra,
                             blocks: Sequence[np.ndarray]) -> "AlgState":
        """State tr(D a) for a positive block density D of total trace one."""
        weights, dens = [], []
        for d, m in zip(algebra.block_dims, blocks):
            m = np.asarray(m, dtype=np.complex128)
            t = float(np.trace(m).real)
            weights.append(t)
            dens.append(m / t if t > 1e-300 else np.eye(d) / d)
        w = np.array(weights)
        return cls(algebra, w / w.sum() if abs(w.sum() - 1) < 1e-9 else w, dens)

    def density_element(self) -> AlgElement:
        """The block element D with mu(a) = sum_i tr(D_i a_i)."""
        return AlgElement(self.algebra, [w * r for w, r in zip(self.weights, self.densities)])

    def evaluate(self, a: AlgElement) -> complex:
        return evaluate_state(self, a)

    def probabilities(self) -> np.ndarray:
        if not self.algebra.is_commutative:
            raise AlgebraMismatch("not a commutative state")
        return np.array(self.weights)

    def key(self) -> bytes:
        """Canonical byte string; used to order pairs deterministically."""
        parts = [np.ascontiguousarray(self.weights).tobytes()]
        parts += [np.ascontiguousarray(r).tobytes() for r in self.densities]
        return b"".join(parts)

    def allclose(self, other: "AlgState", atol: float = 1e-10) -> bool:
        if not self.algebra.same_as(other.algebra):
            return False
        a, b = self.density_element(), other.density_element()
        return all(np.allclose(x, y, atol=atol, rtol=0) for x, y in zip(a.blocks, b.blocks))


def evaluate_state(mu: AlgState, a: AlgElement) -> complex:
    """mu(a) = sum_i w_i tr(rho_i a_i)."""
    if not mu.algebra.same_as(a.algebra):
        raise AlgebraMismatch(f"state on {mu.algebra.block_dims}, element on {a.algebra.block_dims}")
    total = 0j
    for w, rho, blk in zip(mu.weights, mu.densities, a.blocks):
        if w:
            total += w * np.sum(rho.T * blk)
    return complex(total)


def mix_states(states: Sequence[AlgState], coeffs: Sequence[float]) -> AlgState:
    """Convex combination of states on one algebra."""
    alg = states[0].algebra
    c = np.asarray(coeffs, dtype=float)
    blocks = [np.zeros((d, d), dtype=np.complex128) for d in alg.block_dims]
    for s, t in zip(states, c):
        if not s.algebra.same_as(alg):
            raise AlgebraMismatch("states live on different algebras")
        for i, m in enumerate(s.density_element().blocks):
            blocks[i] = blocks[i] + t * m
    return AlgState.from_density_element(alg, blocks)


def random_pure_state(algebra: FiniteDimAlgebra, rng: np.random.Generator) -> AlgState:
    """Rank-one density in a uniformly chosen block (Haar-random vector)."""
    block = int(rng.integers(algebra.num_blocks))
    d = algebra.block_dims[block]
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return AlgState.pure(algebra, block, v)


def random_mixed_state(algebra: FiniteDimAlgebra, rng: np.random.Generator) -> AlgState:
    """Dirichlet block weights with trace-normalised Wishart densities."""
    w = rng.dirichlet(np.ones(algebra.num_blocks))
    dens = []
    for d in algebra.block_dims:
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        m = g @ g.conj().T
        dens.append(m / np.trace(m).real)
    return AlgState(algebra, w / w.sum(), dens)


@dataclass(frozen=True, eq=False)
class UnitalHom:
    """A *-homomorphism in Bratteli form.

    ``multiplicities[i, j]`` copies of source block i sit inside target block
    j, laid out block-diagonally in order of i, then conjugated by
    ``block_unitaries[j]`` when given.
    """

    source: FiniteDimAlgebra
    target: FiniteDimAlgebra
    multiplicities: np.ndarray
    block_unitaries: tuple[np.ndarray, ...] | None = None
    check: bool = True

    def __post_init__(self):
        m = np.array(self.multiplicities, dtype=int)
        if m.shape != (self.source.num_blocks, self.target.num_blocks):
            raise AlgebraMismatch(
                f"multiplicity matrix shape {m.shape} does not match "
                f"{self.source.num_blocks}x{self.target.num_blocks}")
        if np.any(m < 0):
            raise ValueError("multiplicities must be nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "multiplicities", m)
        if self.block_unitaries is not None:
            us = tuple(_frozen(u) for u in self.block_unitaries)
            if len(us) != self.target.num_blocks:
                raise AlgebraMismatch("one unitary per target block required")
            for d, u in zip(self.target.block_dims, us):
                if u.shape != (d, d):
                    raise AlgebraMismatch(f"unitary shape {u.shape} does not match {d}x{d}")
                if not np.allclose(u @ u.conj().T, np.eye(d), atol=1e-10):
                    raise ValueError("block_unitaries must be unitary")
            object.__setattr__(self, "block_unitaries", us)
        if self.check and self.unitality_defects():
            raise ValueError(f"non-unital multiplicities: {self.unitality_defects()}")

    @classmethod
    def identity(cls, algebra: FiniteDimAlgebra) -> "UnitalHom":
        return cls(algebra, algebra, np.eye(algebra.num_blocks, dtype=int))

    @classmethod
    def from_point_map(cls, source: FiniteDimAlgebra, target: FiniteDimAlgebra,
                       point_map: Sequence[int]) -> "UnitalHom":
        """Pullback f -> f o s for a map s of target points to source points."""
        m = np.zeros((source.num_blocks, target.num_blocks), dtype=int)
        for j, i in enumerate(point_map):
            m[i, j] = 1
        return cls(source, target, m)

    def unitality_defects(self) -> list[tuple[int, int, int]]:
        """(target block, embedded size, block size) for every mismatch."""
        ds = np.array(self.source.block_dims)
        out = []
        for j, dt in enumerate(self.target.block_dims):
            size = int(ds @ self.multiplicities[:, j])
            if size != dt:
                out.append((j, size, dt))
        return out

    def is_unital(self) -> bool:
        return not self.unitality_defects()

    def _layout(self, j: int) -> list[int]:
        """Source block index of each diagonal segment of target block j."""
        return [i for i in range(self.source.num_blocks)
                for _ in range(self.multiplicities[i, j])]

    def apply(self, a: AlgElement) -> AlgElement:
        return apply_hom(self, a)

    def pushforward(self, mu: AlgState) -> AlgState:
        return dual_pushforward(self, mu)

    def then(self, other: "UnitalHom") -> "UnitalHom":
        """other o self."""
        return compose(other, self)

    def inverse(self) -> "UnitalHom":
        """Inverse of a *-isomorphism (permutation multiplicities)."""
        m = self.multiplicities
        if m.shape[0] != m.shape[1] or not (
                np.all(m.sum(axis=0) == 1) and np.all(m.sum(axis=1) == 1)):
            raise ValueError("homomorphism is not an isomorphism")
        back = m.T.copy()
        if self.block_unitaries is None:
            return UnitalHom(self.target, self.source, back)
        # psi(a)_j = U_j a_{s(j)} U_j*, so psi^{-1}(b)_i = U_j* b_j U_j.
        # Write that as conjugation of b_j (sitting in block i) by U_j*.
        us = [None] * self.source.num_blocks
        for j in range(m.shape[1]):
            i = int(np.argmax(m[:, j]))
            us[i] = self.block_unitaries[j].conj().T
        return UnitalHom(self.target, self.source, back, tuple(us))


def apply_hom(phi: UnitalHom, a: AlgElement) -> AlgElement:
    if not a.algebra.same_as(phi.source):
        raise AlgebraMismatch(
            f"element on {a.algebra.block_dims}, hom source {phi.source.block_dims}")
    blocks = []
    for j, d in enumerate(phi.target.block_dims):
        layout = phi._layout(j)
        x = _block_diag([a.blocks[i] for i in layout]) if layout else np.zeros((0, 0))
        if x.shape != (d, d):
            raise ValueError(f"non-unital hom: target block {j} receives size {x.shape[0]}, needs {d}")
        if phi.block_unitaries is not None:
            u = phi.block_unitaries[j]
            x = u @ x @ u.conj().T
        blocks.append(x)
    return AlgElement(phi.target, blocks)


def dual_pushforward(phi: UnitalHom, mu: AlgState) -> AlgState:
    """The state a -> mu(phi(a)) on the source algebra."""
    if not mu.algebra.same_as(phi.target):
        raise AlgebraMismatch(
            f"state on {mu.algebra.block_dims}, hom target {phi.target.block_dims}")
    src = phi.source
    acc = [np.zeros((d, d), dtype=np.complex128) for d in src.block_dims]
    for j in range(phi.target.num_blocks):
        w = mu.weights[j]
        if w == 0:
            continue
        sigma = mu.densities[j]
        if phi.block_unitaries is not None:
            u = phi.block_unitaries[j]
            sigma = u.conj().T @ sigma @ u
        pos = 0
        for i in phi._layout(j):
            d = src.block_dims[i]
            acc[i] += w * sigma[pos:pos + d, pos:pos + d]
            pos += d
    return AlgState.from_density_element(src, acc)


def compose(psi: UnitalHom, phi: UnitalHom) -> UnitalHom:
    """psi o phi, with multiplicity matrix phi.m @ psi.m."""
    if not phi.target.same_as(psi.source):
        raise AlgebraMismatch("homomorphisms are not composable")
    m = phi.multiplicities @ psi.multiplicities
    A, B, C = phi.source, phi.target, psi.target
    unitaries = []
    trivial = True
    for j, dc in enumerate(C.block_dims):
        # nested layout: for each B block k (with multiplicity), phi's layout of k
        segments = []  # (source block i, nested start)
        v_blocks = []
        pos = 0
        for k in psi._layout(j):
            uk = phi.block_unitaries[k] if phi.block_unitaries is not None else np.eye(B.block_dims[k])
            v_blocks.append(uk)
            for i in phi._layout(k):
                segments.append((i, pos))
                pos += A.block_dims[i]
        order = sorted(range(len(segments)), key=lambda s: segments[s][0])
        idx = np.concatenate([np.arange(segments[s][1], segments[s][1] + A.block_dims[segments[s][0]])
                              for s in order]) if segments else np.zeros(0, dtype=int)
        perm = np.zeros((dc, dc))
        perm[idx, np.arange(dc)] = 1.0
        v = _block_diag(v_blocks) if v_blocks else np.zeros((0, 0))
        uj = psi.block_unitaries[j] if psi.block_unitaries is not None else np.eye(dc)
        w = uj @ v @ perm
        if not np.allclose(w, np.eye(dc), atol=1e-15):
            trivial = False
        unitaries.append(w)
    return UnitalHom(A, C, m, None if trivial else tuple(unitaries))
