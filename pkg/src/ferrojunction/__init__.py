"""Dimensional reduction of a ferroelectric wire-on-film junction energy.

Rescaled 3D energies on the wire/film pair, their 1D, 2D and coupled limit
models, and a sweep harness comparing scaled 3D minima with limit minima.
"""

from .config_io import ConfigError, FieldPreset, RunConfig, materialize_field, parse_config, serialize_config, write_results
from .energy import CoupledField3, EnergyBreakdown, JunctionEnergy, RegimeParams, eval_E_n, eval_S_n, grad_E_n, grad_S_n
from .grid import build_boundary_mask, build_grid_a, build_grid_b, build_junction_map
from .harness import SweepRow, diagnostics, run_gradcheck, run_limit, run_solve3d, run_sweep
from .limits import LimitState, eval_E0, eval_E_coupled, eval_Einf, lift_limit_to_3d, minimize_limit
from .optimize import OptimizerOptions, gradcheck, minimize
from .poisson import PotentialPair, SolverError, solve_coupled_potential, solve_psi_1d, solve_psi_2d, solve_psi_coupled

__all__ = [
    "ConfigError",
    "CoupledField3",
    "EnergyBreakdown",
    "FieldPreset",
    "JunctionEnergy",
    "LimitState",
    "OptimizerOptions",
    "PotentialPair",
    "RegimeParams",
    "RunConfig",
    "SolverError",
    "SweepRow",
    "build_boundary_mask",
    "build_grid_a",
    "build_grid_b",
    "build_junction_map",
    "diagnostics",
    "eval_E0",
    "eval_E_coupled",
    "eval_E_n",
    "eval_Einf",
    "eval_S_n",
    "grad_E_n",
    "grad_S_n",
    "gradcheck",
    "lift_limit_to_3d",
    "materialize_field",
    "minimize",
    "minimize_limit",
    "parse_config",
    "run_gradcheck",
    "run_limit",
    "run_solve3d",
    "run_sweep",
    "serialize_config",
    "solve_coupled_potential",
    "solve_psi_1d",
    "solve_psi_2d",
    "solve_psi_coupled",
    "write_results",
]
