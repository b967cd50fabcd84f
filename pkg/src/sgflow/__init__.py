"""Sobolev-gradient and damped-metric descent flows for first-order
least-squares PDE systems, with a Ginzburg-Landau application."""

from .backend import active_name as backend_name
from .backend import available_backends, set_backend
from .directions import (
    DirectionRequest,
    DirectionResult,
    compute_direction,
    euclidean_gradient,
    gauss_newton_direction,
    lm_direction_dual,
    lm_direction_primal,
    sobolev_gradient,
)
from .errors import (
    DivergedStateError,
    NumericalBreakdownError,
    ParameterError,
    SgflowError,
    ShapeError,
    SingularSystemError,
    SolverError,
    StagnationError,
)
from .flow import (
    FlowConfig,
    FlowTrace,
    LojasiewiczEstimate,
    StepRecord,
    lojasiewicz_monitor,
    run_flow,
    step,
)
from .ginzburg_landau import (
    GLConfig,
    GinzburgLandauSystem,
    VortexReport,
    count_vortices,
    gl_energy_direct,
    gl_initialize,
    gl_system,
    order_parameter_modulus,
)
from .grid import Grid2D, apply_jet, apply_jet_adjoint, assemble_gram, jet_inner
from .residuals import (
    Assembler,
    Assembly,
    BoundaryPenalty,
    EnergyValue,
    LinearJetSystem,
    ResidualSystem,
    evaluate_energy,
    evaluate_residual_and_jacobian,
    fd_jacobian_check,
    model_problem_exponential,
    model_problem_linear_poisson,
)
from .sparse import CsrMatrix, SolveReport, cg_solve, dense_solve

__version__ = "0.1.0"
