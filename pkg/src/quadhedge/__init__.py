"""Quadratic hedging and exercise-policy optimization for American options on futures lattices."""

from .bounds import ValueInterval, contains, value_bounds, witness_measure
from .errors import (
    ArbitrageError,
    CapacityError,
    DegenerateMeasureError,
    DegenerateWeightError,
    LatticeParseError,
    NodeStateError,
    QuadHedgeError,
    SingularityError,
    ValidationError,
)
from .hedging import (
    HedgeCoefficients,
    NodeCoefficients,
    anchored_objective,
    compute_coefficients,
    evaluate_value_function,
    optimal_initial_capital,
    trade_decision,
)
from .lattice import (
    MarketLattice,
    Node,
    PayoffSpec,
    ValidationReport,
    cash_flow,
    compound_discount,
    dump_lattice,
    load_lattice,
    load_payoff,
    validate_lattice,
    validate_payoff,
)
from .measure import (
    SignedStoppedMeasure,
    check_stopped_martingale,
    is_equivalent_measure,
    one_step_weights,
    stopped_path_weights,
    vo_expected_value,
)
from .optimize import (
    OptimizationResult,
    RNMeasureSpec,
    optimize_risk_neutral,
    optimize_vo_naive,
    optimize_vo_time_consistent,
    rn_policy_value,
    time_consistency_violations,
    validate_rn_measure,
)
from .policy import (
    ExercisePolicy,
    canonicalize,
    enumerate_policies,
    load_policy,
    policy_cash_flow,
    stopping_stage,
)
from .simulation import PnlStats, SimulationConfig, exact_hedge_moments, run_hedge, sample_paths, summarize

__version__ = "0.1.0"
