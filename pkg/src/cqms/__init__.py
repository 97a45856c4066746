"""Monge-Kantorovich metrics, inductive limits and Lipschitz bounds for
finite-dimensional C*-algebras."""

from .algebra import (
    AlgElement,
    AlgState,
    AlgebraMismatch,
    FiniteDimAlgebra,
    UnitalHom,
    apply_hom,
    compose,
    dual_pushforward,
    evaluate_state,
    operator_norm,
)
from .inductive import (
    InductiveSequence,
    LimitElement,
    StateTower,
    constant_matrix,
    constant_metric,
    interval_example,
    limit_seminorm_lower_bound,
    product_metric,
    prop36_upper_bound,
    total_boundedness_probe,
    tower_from_state,
    uhf_like,
    validate_sequence,
)
from .lipschitz import (
    BoundSequences,
    Ladder,
    compose_constant_sequences,
    estimate_ratio_constant,
    verify_iso_bounds,
    verify_universal_bound,
)
from .mk import MetricResult, SolverConfig, diameter, kantorovich_duality_gap, mk_distance
from .seminorms import (
    CommutatorSeminorm,
    FiniteMetricLipschitz,
    GroupActionSeminorm,
    LipSeminorm,
    check_axioms,
    unit_ball_membership,
)

__version__ = "0.1.0"
