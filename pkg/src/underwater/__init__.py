"""Minimum expected time a retiree's wealth spends below zero.

Closed-form solution via convex duality and a free-boundary problem, an
independent finite-difference dynamic-programming solver, a Monte Carlo
simulator, executable property checks, and a piecewise-constant-penalty
generalization of the objective.
"""

from .model import MarketConstants, ModelParams, constants, params_from_dict, validate
from .fbp import FbpSolution, solve
from .dual import ValuePoint, invert, m_value, pi_ruin, pi_star, value, value_point
from .hjb import GridSolution, GridSpec, grid_for_params, solve_grid
from .mc import SimConfig, SimEstimate, Strategy, compare, simulate
from .penalty import MultiFbpSolution, StepPenalty, solve_penalized, value_penalized
from .props import LimitConstants, PropReport, limit_constants, run_all

__all__ = [
    "MarketConstants", "ModelParams", "constants", "params_from_dict", "validate",
    "FbpSolution", "solve",
    "ValuePoint", "invert", "m_value", "pi_ruin", "pi_star", "value", "value_point",
    "GridSolution", "GridSpec", "grid_for_params", "solve_grid",
    "SimConfig", "SimEstimate", "Strategy", "compare", "simulate",
    "MultiFbpSolution", "StepPenalty", "solve_penalized", "value_penalized",
    "LimitConstants", "PropReport", "limit_constants", "run_all",
]

__version__ = "0.1.0"
