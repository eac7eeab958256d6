"""Numerical laboratory for coupled nonlinear Schrodinger systems in a harmonic trap."""

from .domain import (
    DEFOCUSING,
    FOCUSING,
    LINEAR,
    Grid,
    ModelParams,
    State,
    build_grid,
    gaussian_state,
    harmonic_ground,
    perturbed_state,
)
from .functionals import report, k_functional, h_functional, gn_ratio, dilate_l2, scale_exp
from .propagator import StepperConfig, Trajectory, evolve
from .groundstate import GroundState, SolverConfig, minimize_action, p1_threshold

__version__ = "0.1.0"

__all__ = [
    "DEFOCUSING",
    "FOCUSING",
    "LINEAR",
    "Grid",
    "GroundState",
    "ModelParams",
    "SolverConfig",
    "State",
    "StepperConfig",
    "Trajectory",
    "build_grid",
    "dilate_l2",
    "evolve",
    "gaussian_state",
    "gn_ratio",
    "h_functional",
    "harmonic_ground",
    "k_functional",
    "minimize_action",
    "p1_threshold",
    "perturbed_state",
    "report",
    "scale_exp",
]
