"""Finite element solver for 2D incompressible flow with defect-deferred
correction time stepping and subgrid artificial viscosity stabilization."""

from .mesh import (
    BoundaryTag,
    Mesh,
    build_rectangle_mesh,
    build_step_channel_mesh,
    uniform_refine,
)
from .spaces import (
    QuadratureRule,
    ScalarSpace,
    TaylorHoodSpace,
    VectorSpace,
    eval_basis,
    interpolate,
    quadrature_rule,
)
from .operators import (
    CoarseGradient,
    GradientProjector,
    apply_bstar,
    assemble_convection_linearized,
    assemble_divergence,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    project_gradient_coarse,
)
from .linsolve import SaddleSystem, SolverError, SolverReport, solve_saddle, solve_spd
from .problems import ManufacturedProblem, StepChannelProblem, inflow_profile
from .analysis import (
    ErrorAccumulator,
    RateTable,
    StabilityMonitor,
    convergence_rate,
    finalize_spacetime,
    step_error,
)
from .stepping import (
    DDCStepper,
    PicardReport,
    SchemeError,
    SchemeParams,
    SchemeState,
    stokes_project_initial,
)

__version__ = "0.1.0"
