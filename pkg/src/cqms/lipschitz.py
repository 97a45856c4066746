"""Ladders between inductive sequences and Lipschitz bounds for the induced maps.

A ladder carries vertical homs psi_n: A_n -> B_n and optionally diagonal homs
Psi_n: B_n -> A_{n+1}.  When the squares and triangles commute these induce
mutually inverse maps between the limits, and the inequalities

    L_B(psi(a)) <= 2 sup(lambda) L_A(a),    L_A(Psi(b)) <= 2 sup(gamma) L_B(b)

are checked one-sidedly: a sampled lower bound of the left side against the
certified upper bound 2^n L_n(a) (1 + diam_n) of the limit seminorm on the
right side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .algebra import AlgElement, UnitalHom, compose
from .inductive import (
    InductiveSequence,
    LimitElement,
    PairDistances,
    interval_example,
    limit_seminorm_lower_bound,
    prop36_upper_bound,
)
from .seminorms import LipSeminorm, ScaledSeminorm


def _opdiff(a: AlgElement, b: AlgElement) -> float:
    return max((float(np.linalg.norm(x - y, 2)) if x.size else 0.0
                for x, y in zip(a.blocks, b.blocks)), default=0.0)


@dataclass(frozen=True, eq=False)
class Ladder:
    seq_A: InductiveSequence
    seq_B: InductiveSequence
    verticals: tuple[UnitalHom, ...]
    diagonals: tuple[UnitalHom, ...] | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "verticals", tuple(self.verticals))
        if self.diagonals is not None:
            object.__setattr__(self, "diagonals", tuple(self.diagonals))

    @property
    def depth(self) -> int:
        return min(self.seq_A.depth, self.seq_B.depth, len(self.verticals))

    def psi(self, n: int) -> UnitalHom:
        return self.verticals[n - 1]

    def Psi(self, n: int) -> UnitalHom:
        if self.diagonals is None:
            raise ValueError("ladder has no diagonal homs")
        return self.diagonals[n - 1]

    def square_residuals(self) -> list[float]:
        """max over matrix units of |phi^B_n(psi_n(b)) - psi_{n+1}(phi^A_n(b))|."""
        out = []
        for n in range(1, self.depth):
            up = self.seq_B.hom(n)
            out.append(max(_opdiff(up.apply(self.psi(n).apply(b)),
                                   self.psi(n + 1).apply(self.seq_A.hom(n).apply(b)))
                           for b in self.seq_A.algebra(n).matrix_units()))
        return out

    def triangle_residuals(self) -> list[tuple[float, float]]:
        """(|Psi_n psi_n - phi^A_n|, |psi_{n+1} Psi_n - phi^B_n|) on matrix units."""
        out = []
        for n in range(1, self.depth):
            lower = max(_opdiff(self.Psi(n).apply(self.psi(n).apply(a)), self.seq_A.hom(n).apply(a))
                        for a in self.seq_A.algebra(n).matrix_units())
            upper = max(_opdiff(self.psi(n + 1).apply(self.Psi(n).apply(b)), self.seq_B.hom(n).apply(b))
                        for b in self.seq_B.algebra(n).matrix_units())
            out.append((lower, upper))
        return out

    def consistency_problems(self, tol: float = 1e-10) -> list[str]:
        problems = []
        for n in range(1, self.depth + 1):
            psi = self.psi(n)
            if not (psi.source.same_as(self.seq_A.algebra(n)) and psi.target.same_as(self.seq_B.algebra(n))):
                problems.append(f"psi_{n} does not map A_{n} to B_{n}")
        if problems:
            return problems
        for n, r in enumerate(self.square_residuals(), 1):
            if r > tol:
                problems.append(f"square at stage {n} fails to commute (residual {r:.3g})")
        if self.diagonals is not None:
            for n, (r1, r2) in enumerate(self.triangle_residuals(), 1):
                if r1 > tol:
                    problems.append(f"Psi_{n} o psi_{n} differs from phi^A_{n} (residual {r1:.3g})")
                if r2 > tol:
                    problems.append(f"psi_{n + 1} o Psi_{n} differs from phi^B_{n} (residual {r2:.3g})")
        return problems

    def forward(self, a: LimitElement) -> LimitElement:
        return LimitElement(a.stage, self.psi(a.stage).apply(a.representative))

    def backward(self, b: LimitElement) -> LimitElement:
        return LimitElement(b.stage + 1, self.Psi(b.stage).apply(b.representative))

    def with_inverse_diagonals(self) -> "Ladder":
        """Diagonals Psi_n = psi_{n+1}^{-1} o phi^B_n, for verticals that are
        isomorphisms between sequences on the same algebras."""
        diags = tuple(compose(self.psi(n + 1).inverse(), self.seq_B.hom(n))
                      for n in range(1, self.depth))
        return Ladder(self.seq_A, self.seq_B, self.verticals, diags, self.label)


@dataclass
class BoundSequences:
    """Per-stage constants.  ``sampled`` entries are lower bounds of the true
    constants, so checks built on them are necessary but not sufficient."""

    lam: list[float] | None = None
    gamma: list[float] | None = None
    alpha: list[float] | None = None
    beta: list[float] | None = None
    theta: list[float] | None = None
    provenance: str = "analytic"

    def __post_init__(self):
        if self.provenance not in ("analytic", "sampled"):
            raise ValueError("provenance is 'analytic' or 'sampled'")
        for name in ("lam", "gamma", "alpha", "beta", "theta"):
            seq = getattr(self, name)
            if seq is None:
                continue
            seq = [float(x) for x in seq]
            if not seq or any(not (x > 0) or math.isinf(x) for x in seq):
                raise ValueError(f"{name} must be a nonempty list of finite positive reals")
            setattr(self, name, seq)


def estimate_ratio_constant(psi: UnitalHom, L_src: LipSeminorm, L_tgt: LipSeminorm,
                            samples: Sequence[AlgElement]) -> float:
    """max L_tgt(psi(a)) / L_src(a) over samples with L_src(a) > 0."""
    best, used = 0.0, 0
    for a in samples:
        ls = L_src.evaluate(a)
        if ls <= 1e-14 * max(1.0, a.norm()):
            continue
        used += 1
        best = max(best, L_tgt.evaluate(psi.apply(a)) / ls)
    if not used:
        raise ValueError("every sample has L_src = 0; the ratio is undefined")
    return best


@dataclass
class BoundRow:
    direction: str
    stage: int
    element_id: int
    lhs_lower: float
    rhs: float
    status: str

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs_lower


@dataclass
class BoundReport:
    rows: list[BoundRow] = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    epistemic: str = "certified"
    notes: list[str] = field(default_factory=list)

    @property
    def violations(self) -> list[BoundRow]:
        return [r for r in self.rows if r.status == "violation"]

    def margins(self, direction: str | None = None) -> dict:
        m = [r.margin for r in self.rows if direction in (None, r.direction) and math.isfinite(r.margin)]
        if not m:
            return {"count": 0}
        ratio = [r.lhs_lower / r.rhs for r in self.rows
                 if direction in (None, r.direction) and r.rhs > 0 and math.isfinite(r.rhs)]
        return {"count": len(m), "min_margin": min(m), "max_ratio": max(ratio, default=0.0)}


def _check(direction, stage, k, lhs, rhs, tol) -> BoundRow:
    bad = lhs > rhs + tol * max(1.0, rhs)
    return BoundRow(direction, stage, k, lhs, rhs, "violation" if bad else "ok")


def _sorted(rows: list[BoundRow]) -> list[BoundRow]:
    return sorted(rows, key=lambda r: (r.direction, r.stage, r.element_id))


@dataclass(frozen=True, eq=False)
class IntoSpace:
    """Homs psi_n: A_n -> B into a single space B with its own Lip-norm."""

    seq_A: InductiveSequence
    maps: tuple[UnitalHom, ...]
    target: LipSeminorm


def verify_universal_bound(data: Ladder | IntoSpace, lam: Sequence[float],
                           elements: Sequence[LimitElement], pairs_B: PairDistances | None = None,
                           tol: float = 1e-7, provenance: str = "analytic") -> BoundReport:
    """Sampled lower bound of L_B(psi(a)) against 2 max(lambda) times the
    certified upper bound of L_A(a), for each test element."""
    lam = list(lam)
    if not lam or any(not (x > 0) or math.isinf(x) for x in lam):
        raise ValueError("lambda must be finite positive reals")
    rep = BoundReport(constants={"sup_lambda": max(lam)},
                      epistemic="certified" if provenance == "analytic" else "necessary_only")
    if isinstance(data, Ladder):
        problems = data.consistency_problems()
        if problems:
            raise ValueError("inconsistent ladder: " + "; ".join(problems))
        if pairs_B is None:
            raise ValueError("tower pairs on B are required for a ladder target")
        seq_A = data.seq_A
    else:
        seq_A = data.seq_A
    factor = 2.0 * max(lam)
    rows = []
    for k, a in enumerate(elements):
        rhs = factor * prop36_upper_bound(seq_A, a)
        if isinstance(data, Ladder):
            lhs = limit_seminorm_lower_bound(data.seq_B, data.forward(a), pairs_B).value
        else:
            lhs = data.target.evaluate(data.maps[a.stage - 1].apply(a.representative))
        rows.append(_check("forward", a.stage, k, lhs, rhs, tol))
    rep.rows = _sorted(rows)
    return rep


def verify_iso_bounds(ladder: Ladder, bounds: BoundSequences,
                      elements_A: Sequence[LimitElement], elements_B: Sequence[LimitElement],
                      pairs_A: PairDistances, pairs_B: PairDistances,
                      tol: float = 1e-7) -> BoundReport:
    """Both directions for a ladder with diagonals:

        forward  L_B(psi(a)) <= 2 sup(lambda) L_A(a)
        backward L_A(Psi(b)) <= 2 sup(gamma)  L_B(b)

    When alpha and beta (and theta) are given, the composite constants are
    reported as well.
    """
    if ladder.diagonals is None:
        raise ValueError("two-sided bounds need diagonal homs")
    if bounds.lam is None or bounds.gamma is None:
        raise ValueError("two-sided bounds need lambda and gamma")
    problems = ladder.consistency_problems()
    if problems:
        raise ValueError("inconsistent ladder: " + "; ".join(problems))
    fwd = verify_universal_bound(ladder, bounds.lam, elements_A, pairs_B, tol, bounds.provenance)
    factor = 2.0 * max(bounds.gamma)
    back = []
    for k, b in enumerate(elements_B):
        if b.stage >= ladder.seq_A.depth:
            continue
        rhs = factor * prop36_upper_bound(ladder.seq_B, b)
        lhs = limit_seminorm_lower_bound(ladder.seq_A, ladder.backward(b), pairs_A).value
        back.append(_check("backward", b.stage, k, lhs, rhs, tol))
    rep = BoundReport(_sorted(fwd.rows + back), dict(fwd.constants), fwd.epistemic)
    rep.constants["sup_gamma"] = max(bounds.gamma)
    if any(s is not None for s in (bounds.alpha, bounds.beta, bounds.theta)):
        rep.constants["composite"] = compose_constant_sequences(bounds)
    return rep


@dataclass
class CompositeConstants:
    products: list[float] | None = None          # lambda_n gamma_n
    shifted: list[float] | None = None           # alpha_n beta_{n+1}
    theta_shifted: list[float] | None = None     # theta_n alpha_{n+1} beta_{n+1}
    sups: dict = field(default_factory=dict)
    sup_product_ok: bool = True


def compose_constant_sequences(bounds: BoundSequences) -> CompositeConstants:
    """Products of constant sequences and the check sup(xy) <= sup(x) sup(y)."""
    out = CompositeConstants()
    ok = True
    if bounds.lam is not None and bounds.gamma is not None:
        if len(bounds.lam) != len(bounds.gamma):
            raise ValueError(f"lambda and gamma lengths differ ({len(bounds.lam)} vs {len(bounds.gamma)})")
        out.products = [x * y for x, y in zip(bounds.lam, bounds.gamma)]
        out.sups["lambda_gamma"] = max(out.products)
        ok &= out.sups["lambda_gamma"] <= max(bounds.lam) * max(bounds.gamma)
    if bounds.alpha is not None and bounds.beta is not None:
        if len(bounds.beta) != len(bounds.alpha) + 1:
            raise ValueError(f"beta needs one more entry than alpha ({len(bounds.beta)} vs "
                             f"{len(bounds.alpha)})")
        out.shifted = [a * b for a, b in zip(bounds.alpha, bounds.beta[1:])]
        out.sups["alpha_beta_next"] = max(out.shifted)
        ok &= out.sups["alpha_beta_next"] <= max(bounds.alpha) * max(bounds.beta)
    if bounds.theta is not None and bounds.alpha is not None and bounds.beta is not None:
        if len(bounds.alpha) != len(bounds.theta) + 1 or len(bounds.beta) < len(bounds.theta) + 1:
            raise ValueError("theta needs one fewer entry than alpha and beta")
        out.theta_shifted = [t * a * b for t, a, b in
                             zip(bounds.theta, bounds.alpha[1:], bounds.beta[1:])]
        out.sups["theta_alpha_beta_next"] = max(out.theta_shifted)
        ok &= out.sups["theta_alpha_beta_next"] <= (max(bounds.theta) * max(bounds.alpha)
                                                    * max(bounds.beta))
    out.sup_product_ok = bool(ok)
    return out


# -- builtin ladders ----------------------------------------------------------

def _rescaled(seq: InductiveSequence, factor: float, label: str) -> InductiveSequence:
    return InductiveSequence(tuple(ScaledSeminorm(L, factor) for L in seq.seminorms), seq.homs,
                             label, seq.kind, seq.points, seq.notes)


def identity_ladder(seq: InductiveSequence) -> tuple[Ladder, BoundSequences]:
    ids = tuple(UnitalHom.identity(A) for A in seq.algebras)
    ladder = Ladder(seq, seq, ids, label=f"identity ladder on {seq.label}").with_inverse_diagonals()
    ones = [1.0] * seq.depth
    return ladder, BoundSequences(ones, ones[:], provenance="analytic")


def scaled_ladder(seq: InductiveSequence, c: float = 3.0) -> tuple[Ladder, BoundSequences]:
    """B_n = (A_n, c L_n), identity verticals: lambda = c, gamma = 1/c."""
    B = _rescaled(seq, c, f"{seq.label} scaled by {c:g}")
    ids = tuple(UnitalHom.identity(A) for A in seq.algebras)
    ladder = Ladder(seq, B, ids, label=f"scaled ladder c={c:g}").with_inverse_diagonals()
    return ladder, BoundSequences([c] * seq.depth, [1.0 / c] * seq.depth, provenance="analytic")


def dilated_interval_ladder(depth: int = 4, points_per_stage: int = 9,
                            dilation: float = 2.0) -> tuple[Ladder, BoundSequences]:
    """Interval grids against the same grids with metric dilation * d:
    Lipschitz constants scale by 1/dilation, so lambda = 1/dilation and
    gamma = dilation."""
    A = interval_example(depth, points_per_stage)
    B = interval_example(depth, points_per_stage, scale=dilation)
    ids = tuple(UnitalHom.identity(X) for X in A.algebras)
    ladder = Ladder(A, B, ids, label=f"dilated interval ladder x{dilation:g}").with_inverse_diagonals()
    return ladder, BoundSequences([1.0 / dilation] * depth, [dilation] * depth, provenance="analytic")
