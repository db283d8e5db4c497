"""DICE-2016 growth-climate model with endogenous preferences for non-market goods."""

from .analysis import SCENARIOS, ScenarioResult, run_scenario, run_sweep, scc
from .calibration import ModelParams, ParameterError, load_calibration, load_params
from .fixed_point import FixedPointOptions, solve_endogenous
from .optimizer import ControlPath, OptimizeOptions, optimize, simulate

__version__ = "0.1.0"

__all__ = [
    "SCENARIOS", "ScenarioResult", "run_scenario", "run_sweep", "scc",
    "ModelParams", "ParameterError", "load_calibration", "load_params",
    "FixedPointOptions", "solve_endogenous",
    "ControlPath", "OptimizeOptions", "optimize", "simulate",
]
