"""Implicit (backward-Euler) time stepping for nonlinear parabolic PDEs in non-divergence form
``u_t + F(D^2u, Du, u, x, t) = 0`` with zero initial and boundary data, plus
numerical diagnostics for the estimates that make the scheme converge.
"""

from .operators import (
    BellmanOperator, Control, CustomOperator, EllipticOperator, Forcing, LinearOperator,
    PucciOperator, SymMatrix, check_structure_condition, check_uniform_ellipticity,
    make_operator, pucci_minus, pucci_plus,
)
from .grid import Grid, GridFunction, StencilFrame, assemble_residual
from .step_solver import NonConvergence, StepConfig, StepSolveReport, solve_step
from .driver import RefinementLadder, RotheSequence, interpolate, refinement_ladder, run_rothe

__version__ = "0.1.0"
