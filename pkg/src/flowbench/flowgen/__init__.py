"""Case grids and the in-house finite-volume flow generator."""
from .cases import (BASELINES, GEOMETRY_KEYS, PROBLEMS, SUBSETS, OperatingParams, baseline, case_id,
                    enumerate_cases)
from .geometry import build_geometry_mask, cell_centers
from .residual import Coefficients, ResidualReport, scaled_residual
from .solver import (SUPPORTED, FieldState, SolverConfig, advance_timestep, effective_velocity,
                     frame_from_state, initial_state, solve_case)

__all__ = [
    "BASELINES", "Coefficients", "FieldState", "GEOMETRY_KEYS", "OperatingParams", "PROBLEMS",
    "ResidualReport", "SUBSETS", "SUPPORTED", "SolverConfig", "advance_timestep", "baseline",
    "build_geometry_mask", "case_id", "cell_centers", "effective_velocity", "enumerate_cases",
    "frame_from_state", "initial_state", "scaled_residual", "solve_case",
]
