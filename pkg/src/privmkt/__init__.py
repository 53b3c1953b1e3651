"""Equilibria of a Hotelling-style market where free services compete on
privacy risk and quality of service."""
from .market import (
    DegenerateDifferentiation,
    EquilibriumOutcome,
    FeasibilityReport,
    MarketParams,
    RiskDistribution,
    SPStrategy,
    StrategyProfile,
    cdf,
    consumer_utility,
    evaluate_profiles,
    indifference_threshold,
    inverse_cdf,
    market_shares,
    market_thresholds,
    sp_margin,
    sp_profit,
)
from .closed_form import ClosedFormSolution, check_feasibility, solve_theorem1
from .numeric import (
    BestResponseTrace,
    NotAnEquilibrium,
    SolverConfig,
    best_response_eps,
    iterate_best_response,
    solve_spne,
    stage2_solve,
)
from .oracle import Certificate, NonConvergence, brute_force_stage2, certify, grid_best_response

__version__ = "0.1.0"

__all__ = [
    "DegenerateDifferentiation",
    "EquilibriumOutcome",
    "FeasibilityReport",
    "MarketParams",
    "RiskDistribution",
    "SPStrategy",
    "StrategyProfile",
    "cdf",
    "consumer_utility",
    "evaluate_profiles",
    "indifference_threshold",
    "inverse_cdf",
    "market_shares",
    "market_thresholds",
    "sp_margin",
    "sp_profit",
    "ClosedFormSolution",
    "check_feasibility",
    "solve_theorem1",
    "BestResponseTrace",
    "NotAnEquilibrium",
    "SolverConfig",
    "best_response_eps",
    "iterate_best_response",
    "solve_spne",
    "stage2_solve",
    "Certificate",
    "NonConvergence",
    "brute_force_stage2",
    "certify",
    "grid_best_response",
]
