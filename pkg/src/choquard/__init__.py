"""Radial numerics for the p-Laplacian Choquard equation."""
from .functional import (EnergyReport, NonlinearitySpec, ProblemParams, critical_exponents,
                         energy_report, growth_check, weak_residual)
from .grid import RadialGrid, RadialProfile, build_grid, differentiate, integrate
from .identities import (dgms_check, decay_fit, degiorgi_sequence, existence_window,
                         hls_scaling_check, moser_ladder, nehari_report, pohozaev_report)
from .riesz import RieszOperator, build_kernel, riesz_constant
from .solver import NonexistenceError, Solution, SolveConfig, fibering_profile, solve_ground_state

__version__ = "0.1.0"

__all__ = [
    "EnergyReport", "NonexistenceError", "NonlinearitySpec", "ProblemParams", "RadialGrid",
    "RadialProfile", "RieszOperator", "Solution", "SolveConfig", "build_grid", "build_kernel",
    "critical_exponents", "decay_fit", "degiorgi_sequence", "dgms_check", "differentiate",
    "energy_report", "existence_window", "fibering_profile", "growth_check",
    "hls_scaling_check", "integrate", "moser_ladder", "nehari_report", "pohozaev_report",
    "riesz_constant", "solve_ground_state", "weak_residual",
]
