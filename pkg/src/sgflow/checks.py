"""Self-verification battery behind the `check` CLI subcommand.

Each check pits an implementation path against an independent oracle:
adjoint identities against direct inner products, sparse solves against
dense factorizations, analytic Jacobians against finite differences, the
primal damped direction against its residual-space dual, and the
residual-form energy against a direct quadrature of the physical
free-energy density.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .directions import lm_direction_dual, lm_direction_primal, sobolev_gradient
from .ginzburg_landau import GinzburgLandauSystem, count_vortices, gl_energy_direct
from .grid import Grid2D, apply_jet, apply_jet_adjoint, assemble_gram, jet_inner
from .residuals import (
    Assembler,
    ResidualSystem,
    evaluate_energy,
    fd_jacobian_check,
    model_problem_exponential,
    model_problem_linear_poisson,
)
from .sparse import CsrMatrix, cg_solve, dense_solve


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


class _CorruptedJacobian(ResidualSystem):
    """Wrapper that perturbs one analytic Jacobian entry (test hook)."""

    def __init__(self, inner: ResidualSystem):
        self.inner = inner
        self.name = inner.name + "+fault"
        self.field_count = inner.field_count
        self.residual_dim = inner.residual_dim
        self.boundary_penalties = inner.boundary_penalties

    def residual(self, jets):
        return self.inner.residual(jets)

    def jacobian(self, jets):
        jac = self.inner.jacobian(jets).copy()
        jac[:, 0, 0, 0] += 0.1
        return jac


def _gl_state(grid: Grid2D, seed: int = 0, spread: float = 0.3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = np.zeros(4 * grid.n_nodes)
    u[: grid.n_nodes] = 1.0
    return u + spread * rng.standard_normal(4 * grid.n_nodes)


def check_adjoint_identity_2d() -> CheckResult:
    rng = np.random.default_rng(1)
    worst = 0.0
    for nx, ny in ((3, 3), (5, 4), (7, 6)):
        grid = Grid2D(nx, ny, 1.3, 0.9)
        for _ in range(7):
            u = rng.standard_normal(2 * grid.n_nodes)
            j = rng.standard_normal((grid.n_cells, 2, 3))
            lhs = jet_inner(grid, apply_jet(grid, u), j)
            rhs = float(np.dot(u, apply_jet_adjoint(grid, j)))
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return CheckResult("adjoint_identity_2d", worst < 1e-12, f"max rel err {worst:.2e}")


def check_adjoint_identity_1d() -> CheckResult:
    rng = np.random.default_rng(2)
    grid = Grid2D(9, 1, 2.0, 1.0)
    worst = 0.0
    for _ in range(10):
        u = rng.standard_normal(grid.n_nodes)
        j = rng.standard_normal((grid.n_cells, 1, 2))
        lhs = jet_inner(grid, apply_jet(grid, u), j)
        rhs = float(np.dot(u, apply_jet_adjoint(grid, j)))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return CheckResult("adjoint_identity_1d", worst < 1e-12, f"max rel err {worst:.2e}")


def check_gram_matches_composition() -> CheckResult:
    worst = 0.0
    for nx, ny in ((2, 2), (4, 3), (5, 5), (5, 1)):
        grid = Grid2D(nx, ny, 1.1, 0.8)
        gram = assemble_gram(grid, 1).to_dense()
        comp = np.zeros_like(gram)
        for k in range(grid.n_nodes):
            e = np.zeros(grid.n_nodes)
            e[k] = 1.0
            comp[:, k] = apply_jet_adjoint(grid, apply_jet(grid, e))
        worst = max(worst, np.max(np.abs(gram - comp)))
    return CheckResult(
        "gram_matches_composition", worst < 1e-13, f"max entry diff {worst:.2e}"
    )


def check_jet_affine_exactness() -> CheckResult:
    grid = Grid2D(6, 5, 1.7, 2.4)
    x, y = grid.node_coords()
    a, b, c = 0.7, -1.3, 0.4
    jets = apply_jet(grid, a + b * x + c * y)
    xc, yc = grid.cell_centers()
    err = max(
        np.max(np.abs(jets[:, 0, 0] - (a + b * xc + c * yc))),
        np.max(np.abs(jets[:, 0, 1] - b)),
        np.max(np.abs(jets[:, 0, 2] - c)),
    )
    return CheckResult("jet_affine_exactness", err < 1e-13, f"max err {err:.2e}")


def check_cg_matches_dense() -> CheckResult:
    rng = np.random.default_rng(3)
    worst = 0.0
    for n in (8, 20):
        m = rng.standard_normal((n, n))
        a = m.T @ m + np.eye(n)
        b = rng.standard_normal(n)
        A = CsrMatrix.from_dense(a, symmetric=True)
        x, rep = cg_solve(A, b, tol=1e-12)
        xd = dense_solve(a, b)
        worst = max(worst, np.linalg.norm(x - xd) / np.linalg.norm(xd))
        if not rep.converged:
            return CheckResult("cg_matches_dense", False, "cg did not converge")
    return CheckResult("cg_matches_dense", worst < 1e-8, f"max rel err {worst:.2e}")


def check_spmv_matches_dense() -> CheckResult:
    rng = np.random.default_rng(4)
    a = rng.standard_normal((10, 10))
    a[rng.random((10, 10)) < 0.5] = 0.0
    A = CsrMatrix.from_dense(a)
    x = rng.standard_normal(10)
    err = float(np.max(np.abs(A.matvec(x) - a @ x)))
    return CheckResult("spmv_matches_dense", err < 1e-13, f"max err {err:.2e}")


def _fd_check(name: str, system, grid, u) -> CheckResult:
    err = fd_jacobian_check(system, grid, u, probes=10, seed=5)
    return CheckResult(name, err < 1e-6, f"max rel err {err:.2e}")


def check_fd_jacobian_gl(inject_fault: bool = False) -> CheckResult:
    grid = Grid2D(6, 6, 2.0, 2.0)
    system: ResidualSystem = GinzburgLandauSystem(4.0, 2.0)
    if inject_fault:
        system = _CorruptedJacobian(system)
    return _fd_check("fd_jacobian_gl", system, grid, _gl_state(grid, seed=6))


def check_fd_jacobian_exp1d() -> CheckResult:
    grid = Grid2D(17, 1, 1.0, 1.0)
    rng = np.random.default_rng(7)
    return _fd_check(
        "fd_jacobian_exp1d", model_problem_exponential(), grid, rng.standard_normal(17)
    )


def check_fd_jacobian_poisson2d() -> CheckResult:
    grid = Grid2D(5, 5, 1.0, 1.0)
    rng = np.random.default_rng(8)
    return _fd_check(
        "fd_jacobian_poisson2d",
        model_problem_linear_poisson(1.0, 0.5, grid),
        grid,
        rng.standard_normal(25),
    )


def check_gradient_matches_finite_difference() -> CheckResult:
    grid = Grid2D(4, 4, 4.0, 4.0)
    system = GinzburgLandauSystem(4.0, 4.0)
    u = _gl_state(grid, seed=9)
    asm = Assembler(system, grid)
    g = asm.gradient(asm.assemble(u))
    eps = 1e-6
    worst = 0.0
    scale = float(np.max(np.abs(g)))
    for i in range(u.shape[0]):
        up = u.copy()
        up[i] += eps
        um = u.copy()
        um[i] -= eps
        fd = (asm.energy(up) - asm.energy(um)) / (2 * eps)
        worst = max(worst, abs(fd - g[i]) / scale)
    return CheckResult(
        "gradient_matches_finite_difference", worst < 1e-6, f"max rel err {worst:.2e}"
    )


def check_lm_primal_dual_equivalence() -> CheckResult:
    grid = Grid2D(4, 4, 4.0, 4.0)
    system = GinzburgLandauSystem(4.0, 4.0)
    u = _gl_state(grid, seed=10)
    worst = 0.0
    for lam in (0.1, 1.0, 10.0):
        p = lm_direction_primal(system, grid, u, lam, cg_tol=1e-12)
        d = lm_direction_dual(system, grid, u, lam, cg_tol=1e-12)
        rel = np.linalg.norm(p.direction - d.direction) / np.linalg.norm(p.direction)
        worst = max(worst, rel)
    return CheckResult(
        "lm_primal_dual_equivalence", worst < 1e-8, f"max rel diff {worst:.2e}"
    )


def check_lm_sobolev_limit() -> CheckResult:
    grid = Grid2D(4, 4, 4.0, 4.0)
    system = GinzburgLandauSystem(4.0, 4.0)
    u = _gl_state(grid, seed=11)
    sob = sobolev_gradient(system, grid, u, cg_tol=1e-13)
    lm = lm_direction_primal(system, grid, u, 1e8, cg_tol=1e-13)
    rel = np.linalg.norm(lm.direction - sob.direction) / np.linalg.norm(sob.direction)
    return CheckResult("lm_sobolev_limit", rel < 1e-4, f"rel diff {rel:.2e}")


def check_gl_energy_identity() -> CheckResult:
    grid = Grid2D(5, 5, 2.0, 3.0)
    system = GinzburgLandauSystem(4.0, 2.5)
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(50):
        u = rng.standard_normal(4 * grid.n_nodes)
        e1 = evaluate_energy(system, grid, u).value
        e2 = gl_energy_direct(grid, u, system.kappa, system.h0)
        worst = max(worst, abs(e1 - e2) / max(abs(e2), 1e-300))
    return CheckResult("gl_energy_identity", worst < 1e-12, f"max rel err {worst:.2e}")


def check_winding_synthetic_vortex() -> CheckResult:
    grid = Grid2D(17, 17, 2.0, 2.0)
    x, y = grid.node_coords()
    cx = cy = 1.0 - 1e-3  # keep the zero off the nodes
    zr, zi = x - cx, y - cy
    # normalize by max(|z|, 0.5) so the modulus dips below the vortex
    # filter near the core while the phase still winds by 2 pi
    mod = np.maximum(np.hypot(zr, zi), 0.5)
    u = np.concatenate([zr / mod, zi / mod, np.zeros(grid.n_nodes), np.zeros(grid.n_nodes)])
    rep = count_vortices(grid, u, min_modulus=0.7)
    ok = rep.count == 1 and rep.total_winding == 1 and rep.cells[0].winding == 1
    conj = u.copy()
    conj[grid.n_nodes : 2 * grid.n_nodes] *= -1.0
    rep2 = count_vortices(grid, conj, min_modulus=0.7)
    ok = ok and rep2.total_winding == -1 and rep2.count == 1
    return CheckResult(
        "winding_synthetic_vortex",
        ok,
        f"count {rep.count}, winding {rep.total_winding}, conjugate {rep2.total_winding}",
    )


_CHECKS: list[Callable[[], CheckResult]] = [
    check_adjoint_identity_2d,
    check_adjoint_identity_1d,
    check_gram_matches_composition,
    check_jet_affine_exactness,
    check_cg_matches_dense,
    check_spmv_matches_dense,
    check_fd_jacobian_gl,
    check_fd_jacobian_exp1d,
    check_fd_jacobian_poisson2d,
    check_gradient_matches_finite_difference,
    check_lm_primal_dual_equivalence,
    check_lm_sobolev_limit,
    check_gl_energy_identity,
    check_winding_synthetic_vortex,
]


def run_checks(name_filter: str | None = None, inject_fault: str | None = None):
    """Run the battery; returns the list of results.

    `name_filter` keeps checks whose name contains the substring.
    `inject_fault='jacobian'` corrupts the Ginzburg-Landau Jacobian so
    the finite-difference check must fail (verifies the battery can
    fail).
    """
    results = []
    for fn in _CHECKS:
        name = fn.__name__.removeprefix("check_")
        if name_filter and name_filter not in name:
            continue
        if fn is check_fd_jacobian_gl:
            results.append(fn(inject_fault == "jacobian"))
        else:
            results.append(fn())
    return results
