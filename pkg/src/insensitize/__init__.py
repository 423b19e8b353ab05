"""Insensitizing controls for the clamped fourth-order Schrodinger equation.

Layers, bottom-up: grid operators and masks (:mod:`.grid`), Crank-Nicolson
propagation (:mod:`.solver`), Carleman weights in log space (:mod:`.weights`),
forward-backward cascades and the sentinel derivative (:mod:`.cascade`),
penalized HUM control synthesis (:mod:`.control`), the weighted-inequality
audit (:mod:`.audit`) and the batch front end (:mod:`.cli`).
"""

from .cascade import (CascadeProblem, insensitivity_derivative_adjoint, insensitivity_derivative_fd,
                      sentinel_value, solve_adjoint_pair, solve_cascade, solve_cascade_linear,
                      solve_cascade_nonlinear)
from .control import ControlOperator, ControlResult, ControlSpec, hum_solve, nonlinear_insensitize
from .errors import ConfigurationError, NumericalError
from .grid import Grid, Mask, build_grid, indicator_mask
from .solver import DispersiveSolver, Trajectory, l2_inner, l2_norm
from .weights import ScaledValue, WeightParams, weighted_sample

__version__ = "0.1.0"

__all__ = [
    "CascadeProblem", "ConfigurationError", "ControlOperator", "ControlResult", "ControlSpec",
    "DispersiveSolver", "Grid", "Mask", "NumericalError", "ScaledValue", "Trajectory",
    "WeightParams", "build_grid", "hum_solve", "indicator_mask", "insensitivity_derivative_adjoint",
    "insensitivity_derivative_fd", "l2_inner", "l2_norm", "nonlinear_insensitize", "sentinel_value",
    "solve_adjoint_pair", "solve_cascade", "solve_cascade_linear", "solve_cascade_nonlinear",
    "weighted_sample",
]
