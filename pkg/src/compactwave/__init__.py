"""Compact 4th-order finite-difference schemes for the wave equation.

Implicit three-level schemes, three-point per axis, for
rho(x) u_tt - sum_k a_k^2 u_xkxk = f on boxes with Dirichlet data, plus fast
sine-transform preconditioned iterative solvers, stability and energy
monitors, and an experiment harness.
"""

from .grid import GridFn, Mesh, inner_product_h, make_uniform_mesh, max_norm, norm_h, sample
from .schemes import (
    F0Variant,
    ProblemSpec,
    SchemeConfig,
    TimeState,
    U4Inputs,
    Variant,
    run,
    run_explicit2,
)
from .solvers import SolveReport, SolverConfig, q0, q1, theta_opt

__all__ = [
    "GridFn",
    "Mesh",
    "make_uniform_mesh",
    "sample",
    "inner_product_h",
    "norm_h",
    "max_norm",
    "ProblemSpec",
    "SchemeConfig",
    "Variant",
    "F0Variant",
    "U4Inputs",
    "TimeState",
    "run",
    "run_explicit2",
    "SolverConfig",
    "SolveReport",
    "theta_opt",
    "q0",
    "q1",
]

__version__ = "0.1.0"
