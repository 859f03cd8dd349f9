"""Regularity-stratified solving of initial value problems ``y' = f(t, y)``."""

from .continuation import ContinuationTrace, certified_radius_lb, continue_to, truncation_order
from .domain import RectDomain
from .errors import (
    BoundaryError,
    ContinuationStalled,
    DomainError,
    DomainExitError,
    EvaluationError,
    InvalidModulusError,
    NoUniquenessBoundError,
    OdeStrataError,
    ParseError,
    PartialSolutionError,
    PrecisionUnreachable,
    RadiusError,
    SolverError,
    StallError,
    UnsupportedError,
)
from .euler import FieldSpec, Polygon, euler_polygon, extend_maximal, field_bound, safe_time_horizon, solve_certified
from .polyivp import PolyIVP, newton_solve, newton_step, picard_solve, picard_step, residual_valuation
from .problem import ProblemFile, emit_problem, parse_problem
from .regularity import ModulusSpec, StratumReport, classify_stratum, modulus_eval, osgood_diverges, osgood_gap_bound
from .series import Dyadic, Interval, Polynomial, TruncatedSeries, eval_certified, series_integrate, series_mul
from .strata import (
    Breaks,
    BreakPoint,
    BreakTower,
    Cluster,
    LayeredSet,
    PiecewiseField,
    RankCertificate,
    TowerSlot,
    continuity_intervals,
    derived_rank,
    discontinuity_set,
    solve_stratified,
)

__version__ = "0.1.0"
