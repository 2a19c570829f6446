"""Threshold emission strategies for a stochastic carbon budget under exponential
and stochastic quasi-hyperbolic discounting."""
from .depletion import DepletionSolver, depletion_report, invert_to_cdf, laplace_transform
from .errors import CarbonThresholdError, ConfigError, NumericalError
from .exp_value import ExpBasis, PiecewiseValue, threshold_exp
from .mc import mc_depletion_prob, mc_value_exp, mc_value_qh, simulate_path
from .model import (
    DiffusionSpec,
    EconomicParams,
    PresentBias,
    Scenario,
    build_scenario,
    load_config,
    make_scenario,
)
from .qh import QhBasis, check_sandwich, equilibrium_threshold, qh_value_for_threshold
from .tables import TABLE_JOBS, SweepPlan, calibrate, run_sweep, run_table, solve_scenario

__all__ = [
    "CarbonThresholdError", "ConfigError", "NumericalError",
    "DiffusionSpec", "EconomicParams", "PresentBias", "Scenario", "build_scenario", "load_config",
    "make_scenario",
    "ExpBasis", "PiecewiseValue", "threshold_exp",
    "QhBasis", "check_sandwich", "equilibrium_threshold", "qh_value_for_threshold",
    "DepletionSolver", "depletion_report", "invert_to_cdf", "laplace_transform",
    "mc_depletion_prob", "mc_value_exp", "mc_value_qh", "simulate_path",
    "TABLE_JOBS", "SweepPlan", "calibrate", "run_sweep", "run_table", "solve_scenario",
]
