"""Descent directions for the least-squares energy.

All directions follow the convention that the update is u - delta. With
G the Sobolev Gram operator, N = J^T W J the damped-metric normal
matrix (penalty blocks included), and g = J^T W r the coefficient
gradient, the available kinds are

    euclidean     delta = g
    sobolev       delta = G^{-1} g
    lm_primal     delta = lam * (lam*G + N)^{-1} g
    lm_dual       delta = G^{-1} J^T (W^{-1} + (1/lam) J G^{-1} J^T)^{-1} r
    gauss_newton  delta = (N + reg*G)^{-1} g

The two damped (lm) forms are algebraically identical: pushing J^T W
through the primal inverse gives the residual-space capacitance system
of the dual form. The damped direction is exactly the gradient of the
energy in the iterate-dependent inner product
<v, w>_u = v^T G w + (1/lam) (Jv)^T W (Jw), so <delta, delta>_u = g^T delta
for every kind, and larger lam moves the step toward the full Sobolev
gradient while lam -> 0 shrinks it to zero along the Gauss-Newton
direction.

Note on conventions: classical Levenberg-Marquardt damping multiplies
the identity block and vanishes at the Gauss-Newton end; here lam
multiplies the metric (Gram) block *and* scales the solve result, so
lam corresponds roughly to the reciprocal of the classical damping
parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SingularSystemError, SolverError
from .grid import Grid2D
from .residuals import Assembler, ResidualSystem
from .sparse import CsrMatrix, DiagonalPlusLowRank, SolveReport, cg_solve

LAMBDA_FLOOR_DEFAULT = 1e-10

DIRECTION_KINDS = ("euclidean", "sobolev", "lm_primal", "lm_dual", "gauss_newton")
DAMPED_KINDS = ("lm_primal", "lm_dual")

_ALIASES = {"lm": "lm_primal", "gn": "gauss_newton"}


def canonical_kind(kind: str) -> str:
    k = _ALIASES.get(kind, kind)
    if k not in DIRECTION_KINDS:
        raise ParameterError(f"unknown direction kind {kind!r}")
    return k


@dataclass
class DirectionRequest:
    """What to compute: a direction kind plus solver knobs."""

    kind: str = "lm_primal"
    lam: float | None = None
    cg_tol: float = 1e-10
    cg_max_iter: int | None = None
    lambda_floor: float = LAMBDA_FLOOR_DEFAULT
    regularization: float = 0.0  # gauss_newton only

    def __post_init__(self):
        self.kind = canonical_kind(self.kind)
        if self.lambda_floor <= 0:
            raise ParameterError("lambda_floor must be positive")
        if self.kind in DAMPED_KINDS:
            if self.lam is None or self.lam < self.lambda_floor:
                raise ParameterError(
                    f"damped directions need lam >= lambda_floor "
                    f"({self.lambda_floor:g}); got {self.lam!r}"
                )
        if self.regularization < 0:
            raise ParameterError("regularization must be >= 0")


@dataclass
class DirectionResult:
    direction: np.ndarray
    metric_norm_sq: float
    report: SolveReport | None
    kind: str
    lam: float | None = None


class DirectionSolver:
    """Direction computations at one fixed iterate.

    Assembles residual, Jacobian and gradient once; the normal matrix is
    built lazily and reused across damping values, so accept/reject
    loops pay only for linear solves.
    """

    def __init__(self, assembler: Assembler, u: np.ndarray):
        self.assembler = assembler
        self.u = np.asarray(u, dtype=np.float64)
        self.assembly = assembler.assemble(self.u)
        self.gradient = assembler.gradient(self.assembly)
        self._ndata = None

    @property
    def energy(self) -> float:
        return self.assembly.energy

    @property
    def normal_data(self) -> np.ndarray:
        if self._ndata is None:
            self._ndata = self.assembler.normal_data(self.assembly)
        return self._ndata

    def _metric(self, delta: np.ndarray) -> float:
        return float(np.einsum("i,i->", self.gradient, delta))

    def compute(self, request: DirectionRequest, strict: bool = True) -> DirectionResult:
        """Compute the requested direction.

        strict=True raises `SolverError` when the linear solve misses its
        tolerance; strict=False returns the best iterate instead (the
        descent driver guards quality through its accept/reject test).
        Gauss-Newton with zero regularization raises
        `SingularSystemError` on breakdown or non-convergence regardless,
        since that signals a singular normal matrix.
        """
        kind = request.kind
        g = self.gradient
        if kind == "euclidean":
            return DirectionResult(g.copy(), self._metric(g), None, kind)

        if kind == "sobolev":
            delta, report = cg_solve(
                self.assembler.gram,
                g,
                tol=request.cg_tol,
                max_iter=request.cg_max_iter,
                deflate=self.assembler.gram_null_modes,
            )
            self._require(report, strict, "Sobolev gradient solve")
            return DirectionResult(delta, self._metric(delta), report, kind)

        if kind == "lm_primal":
            A = self.assembler.system_matrix(self.normal_data, request.lam)
            y, report = cg_solve(
                A,
                g,
                tol=request.cg_tol,
                max_iter=request.cg_max_iter,
                deflate=self.assembler.lm_null_modes,
            )
            self._require(report, strict, "damped-metric solve")
            delta = request.lam * y
            return DirectionResult(delta, self._metric(delta), report, kind, request.lam)

        if kind == "lm_dual":
            return self._dual(request, strict)

        # gauss_newton: with regularization the system is N + reg*G, whose
        # kernel shrinks to ker(G) ∩ ker(N); without it the full structural
        # kernel of N is deflated
        A = self.assembler.system_matrix(self.normal_data, request.regularization)
        deflate = (
            self.assembler.normal_null_modes
            if request.regularization == 0.0
            else self.assembler.lm_null_modes
        )
        if request.regularization == 0.0:
            self._probe_singularity(A, deflate, request)
        delta, report = cg_solve(
            A, g, tol=request.cg_tol, max_iter=request.cg_max_iter, deflate=deflate
        )
        if not report.converged and request.regularization == 0.0:
            raise SingularSystemError(
                "Gauss-Newton normal matrix is singular or indefinite "
                "(gauge-degenerate systems hit this); use a damped direction "
                "or positive regularization",
                report,
            )
        self._require(report, strict, "Gauss-Newton solve")
        return DirectionResult(delta, self._metric(delta), report, kind)

    def _probe_singularity(self, A, deflate, request):
        """Consistency probe for the undamped normal matrix.

        Solves A x = A q for a seeded random q (components along the
        deflated structural kernel removed). A nonsingular system
        reproduces q; a gradient right-hand side stays consistent even
        when gauge invariance makes N singular, so solvability alone
        cannot reveal the rank deficiency that makes the Gauss-Newton
        direction ill-defined.
        """
        rng = np.random.default_rng(2024)
        q = rng.standard_normal(A.n_rows)
        if deflate.size:
            q = q - deflate.T @ (deflate @ q)
        q /= float(np.linalg.norm(q))
        x, report = cg_solve(
            A, A.matvec(q), tol=request.cg_tol, max_iter=request.cg_max_iter,
            deflate=deflate,
        )
        mismatch = float(np.linalg.norm(x - q))
        if not report.converged or mismatch > 1e-3:
            raise SingularSystemError(
                f"Gauss-Newton normal matrix is singular to working precision "
                f"(probe mismatch {mismatch:.2e}; gauge-degenerate systems hit "
                f"this); use a damped direction or positive regularization",
                report,
            )

    def _dual(self, request: DirectionRequest, strict: bool) -> DirectionResult:
        a = self.assembly
        gram = self.assembler.gram
        inner_tol = 0.1 * request.cg_tol
        inner_iters = 0

        def solve_g(rhs):
            nonlocal inner_iters
            x, rep = cg_solve(
                gram,
                rhs,
                tol=inner_tol,
                max_iter=request.cg_max_iter,
                deflate=self.assembler.gram_null_modes,
            )
            inner_iters += rep.iterations
            if not rep.converged and strict:
                raise SolverError("inner Gram solve did not converge", rep)
            return x

        cap = DiagonalPlusLowRank(
            diag=1.0 / a.weights, jac=a.jacobian, solve_g=solve_g, scale=1.0 / request.lam
        )
        q, report = cg_solve(cap, a.residual, tol=request.cg_tol, max_iter=request.cg_max_iter)
        self._require(report, strict, "residual-space capacitance solve")
        delta = solve_g(a.jacobian.rmatvec(q))
        report = SolveReport(
            report.iterations, report.residual_norm, report.converged, inner_iters
        )
        return DirectionResult(delta, self._metric(delta), report, "lm_dual", request.lam)

    @staticmethod
    def _require(report: SolveReport, strict: bool, what: str):
        if strict and not report.converged:
            raise SolverError(
                f"{what} did not converge (relative residual "
                f"{report.residual_norm:.3e} after {report.iterations} iterations)",
                report,
            )


# -- one-shot wrappers -------------------------------------------------------


def euclidean_gradient(
    system: ResidualSystem, grid: Grid2D, u: np.ndarray, assembler: Assembler | None = None
) -> np.ndarray:
    """Coefficient gradient of the discrete energy: g^T h = dE(u + t h)/dt."""
    asm = assembler or Assembler(system, grid)
    a = asm.assemble(np.asarray(u, dtype=np.float64))
    return asm.gradient(a)


def _solver(system, grid, u, assembler):
    return DirectionSolver(assembler or Assembler(system, grid), u)


def sobolev_gradient(
    system,
    grid,
    u,
    cg_tol: float = 1e-10,
    cg_max_iter: int | None = None,
    assembler: Assembler | None = None,
) -> DirectionResult:
    """Gradient in the H^1 metric: solves G delta = g."""
    req = DirectionRequest(kind="sobolev", cg_tol=cg_tol, cg_max_iter=cg_max_iter)
    return _solver(system, grid, u, assembler).compute(req)


def lm_direction_primal(
    system,
    grid,
    u,
    lam: float,
    cg_tol: float = 1e-10,
    cg_max_iter: int | None = None,
    lambda_floor: float = LAMBDA_FLOOR_DEFAULT,
    assembler: Assembler | None = None,
) -> DirectionResult:
    """Damped-metric direction lam * (lam*G + N)^{-1} g."""
    req = DirectionRequest(
        kind="lm_primal",
        lam=lam,
        cg_tol=cg_tol,
        cg_max_iter=cg_max_iter,
        lambda_floor=lambda_floor,
    )
    return _solver(system, grid, u, assembler).compute(req)


def lm_direction_dual(
    system,
    grid,
    u,
    lam: float,
    cg_tol: float = 1e-10,
    cg_max_iter: int | None = None,
    lambda_floor: float = LAMBDA_FLOOR_DEFAULT,
    assembler: Assembler | None = None,
) -> DirectionResult:
    """Damped direction via the residual-space capacitance system.

    Solves (W^{-1} + (1/lam) J G^{-1} J^T) q = r by CG, applying G^{-1}
    with an inner CG at 10x tighter tolerance, then maps back with
    G^{-1} J^T q. Equal to the primal form in exact arithmetic.
    """
    req = DirectionRequest(
        kind="lm_dual",
        lam=lam,
        cg_tol=cg_tol,
        cg_max_iter=cg_max_iter,
        lambda_floor=lambda_floor,
    )
    return _solver(system, grid, u, assembler).compute(req)


def gauss_newton_direction(
    system,
    grid,
    u,
    regularization: float = 0.0,
    cg_tol: float = 1e-10,
    cg_max_iter: int | None = None,
    assembler: Assembler | None = None,
) -> DirectionResult:
    """Direction solving (N + regularization*G) delta = g.

    With zero regularization this is the plain Gauss-Newton step and is
    only defined when N is nonsingular.
    """
    req = DirectionRequest(
        kind="gauss_newton",
        cg_tol=cg_tol,
        cg_max_iter=cg_max_iter,
        regularization=regularization,
    )
    return _solver(system, grid, u, assembler).compute(req)


def compute_direction(
    system, grid, u, request: DirectionRequest, assembler: Assembler | None = None
) -> DirectionResult:
    return _solver(system, grid, u, assembler).compute(request)
