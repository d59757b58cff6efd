"""Optimal prize allocation in large contests on finite effort grids."""

from .contest import (
    ConstantDesign,
    ContestPrimitives,
    OptimalDesign,
    ThresholdDesign,
    TwoStepDesign,
    best_response,
    best_response_dynamics,
    evaluate_design,
    two_atom_profile,
    verify_equilibrium,
    win_probabilities,
)
from .estimator import OptimalAllocation
from .extreme_oracle import PolytopeSpec, certify_two_step, enumerate_up_sets, enumerate_vertices, lp_maximize
from .measures import GridDomain, GridMeasure, NoiseKernel, integrate, pushforward, upper_integral
from .rules import AllocationRule, TwoStepRule, budget, majorizes, materialize, threshold_rule
from .solver import BilinearSurface, ObjectiveSpec, fan_lorentz_check, optimal_over_prior, optimal_rule, sweep_budget

__version__ = "0.1.0"
