import numpy as np
import pytest

from sgflow import (
    Assembler,
    BoundaryPenalty,
    DivergedStateError,
    GinzburgLandauSystem,
    Grid2D,
    LinearJetSystem,
    ResidualSystem,
    apply_jet,
    evaluate_energy,
    evaluate_residual_and_jacobian,
    fd_jacobian_check,
    model_problem_exponential,
    model_problem_linear_poisson,
)
from conftest import gl_state


class TestEvaluateEnergy:
    def test_gl_superconducting_state_zero_energy(self):
        grid = Grid2D(5, 5, 2.0, 3.0)
        sys = GinzburgLandauSystem(4.0, 0.0)
        u = np.zeros(4 * grid.n_nodes)
        u[: grid.n_nodes] = 1.0
        assert evaluate_energy(sys, grid, u).value == pytest.approx(0.0, abs=1e-14)

    def test_gl_field_mismatch_energy(self):
        grid = Grid2D(5, 5, 2.0, 3.0)
        h = 2.5
        sys = GinzburgLandauSystem(4.0, h)
        u = np.zeros(4 * grid.n_nodes)
        u[: grid.n_nodes] = 1.0
        # only the curl-mismatch component is nonzero and constant
        assert evaluate_energy(sys, grid, u).value == pytest.approx(
            0.5 * h * h * 6.0, rel=1e-12
        )

    def test_gl_normal_state_energy(self):
        grid = Grid2D(5, 5, 2.0, 3.0)
        kappa = 4.0
        sys = GinzburgLandauSystem(kappa, 0.0)
        u = np.zeros(4 * grid.n_nodes)
        # only the quartic-well component survives
        assert evaluate_energy(sys, grid, u).value == pytest.approx(
            kappa**2 * 6.0 / 4.0, rel=1e-12
        )

    def test_energy_nonnegative_and_breakdown(self, rng):
        grid = Grid2D(4, 4, 1.0, 1.0)
        sys = GinzburgLandauSystem(2.0, 1.0)
        for _ in range(10):
            ev = evaluate_energy(sys, grid, rng.standard_normal(4 * 16), with_breakdown=True)
            assert ev.value >= 0.0
            assert ev.cell_breakdown.shape == (grid.n_cells,)
            assert ev.value == pytest.approx(
                0.5 * grid.cell_weight * float(np.sum(ev.cell_breakdown**2)), rel=1e-12
            )

    def test_diverged_state_carries_cell_index(self):
        grid = Grid2D(3, 3, 1.0, 1.0)
        sys = GinzburgLandauSystem(2.0, 0.0)
        u = np.zeros(4 * grid.n_nodes)
        u[: grid.n_nodes] = 1.0
        u[4] = np.inf  # node 4 touches cells 0..3; cell 0 sees it first
        with pytest.raises(DivergedStateError) as exc:
            evaluate_energy(sys, grid, u)
        assert exc.value.cell_index == 0


class TestResidualAndJacobian:
    def test_directional_derivative_identity_gl(self):
        grid = Grid2D(6, 6, 4.0, 4.0)
        sys = GinzburgLandauSystem(4.0, 4.0)
        u = gl_state(grid, seed=3)
        asm = Assembler(sys, grid)
        a = asm.assemble(u)
        rng = np.random.default_rng(4)
        for _ in range(5):
            h = rng.standard_normal(u.shape[0])
            eps = 1e-5 * np.linalg.norm(u) / np.linalg.norm(h)
            fd = (asm.energy(u + eps * h) - asm.energy(u - eps * h)) / (2 * eps)
            jh = a.jacobian.matvec(h)
            pred = float(np.einsum("i,i,i->", a.weights, jh, a.residual))
            assert abs(fd - pred) / max(abs(fd), 1e-300) < 1e-6

    def test_value_extraction_jacobian_is_value_rows_of_jet(self):
        grid = Grid2D(3, 3, 1.0, 1.0)
        sys = LinearJetSystem(np.array([[[1.0, 0.0, 0.0]]]), name="value")
        u = np.linspace(0.0, 1.0, grid.n_nodes)
        a = evaluate_residual_and_jacobian(sys, grid, u)
        dense = a.jacobian.to_dense()
        corners = grid.cell_corner_nodes()
        expected = np.zeros_like(dense)
        for cell in range(grid.n_cells):
            expected[cell, corners[cell]] = 0.25
        assert np.array_equal(dense, expected)

    def test_gl_jacobian_hand_blocks_at_zero_field(self):
        grid = Grid2D(3, 3, 1.0, 1.0)
        kappa = 4.0
        sys = GinzburgLandauSystem(kappa, 0.0)
        jets = apply_jet(grid, np.zeros(4 * grid.n_nodes))
        jac = sys.jacobian(jets)
        # at r = s = a = b = 0 the quartic-well row has zero slope and the
        # derivative rows reduce to pure jet selectors
        assert np.all(jac[:, 5, :, :] == 0.0)
        assert np.all(jac[:, 0, 0, 1] == 1.0)
        assert np.all(jac[:, 1, 1, 1] == 1.0)
        assert np.all(jac[:, 4, 3, 1] == 1.0)
        assert np.all(jac[:, 4, 2, 2] == -1.0)
        assert np.all(jac[:, 0, 1, 0] == 0.0)

    def test_residual_includes_boundary_rows(self):
        grid = Grid2D(3, 1, 1.0, 1.0)
        sys = model_problem_exponential()
        u = np.array([2.0, 0.0, 0.0])
        a = evaluate_residual_and_jacobian(sys, grid, u)
        assert a.residual.shape[0] == grid.n_cells + 1
        assert a.residual[-1] == pytest.approx(1.0)  # u[0] - target = 2 - 1
        assert a.weights[-1] == pytest.approx(1e3)


class TestFdJacobianCheck:
    def test_linear_system_near_exact(self):
        grid = Grid2D(5, 5, 1.0, 1.0)
        sys = model_problem_linear_poisson(1.0, 2.0, grid)
        err = fd_jacobian_check(sys, grid, np.linspace(0, 1, 25), probes=5)
        assert err < 1e-10

    def test_gl_random_state(self):
        grid = Grid2D(5, 5, 2.0, 2.0)
        sys = GinzburgLandauSystem(4.0, 2.0)
        err = fd_jacobian_check(sys, grid, gl_state(grid, seed=8), probes=10)
        assert err < 1e-6

    def test_detects_corrupted_jacobian(self):
        grid = Grid2D(5, 5, 2.0, 2.0)

        class Corrupted(ResidualSystem):
            field_count = 4
            residual_dim = 6
            inner = GinzburgLandauSystem(4.0, 2.0)

            def residual(self, jets):
                return self.inner.residual(jets)

            def jacobian(self, jets):
                jac = self.inner.jacobian(jets).copy()
                jac[:, 0, 0, 0] += 0.1
                return jac

        err = fd_jacobian_check(Corrupted(), grid, gl_state(grid, seed=8), probes=10)
        assert err > 1e-3


class TestModelProblems:
    def test_exponential_residual_second_order(self):
        sys = model_problem_exponential()
        norms = []
        for nx in (17, 33):
            grid = Grid2D(nx, 1, 1.0, 1.0)
            x, _ = grid.node_coords()
            a = evaluate_residual_and_jacobian(sys, grid, np.exp(x))
            norms.append(float(np.max(np.abs(a.cell_residuals))))
        assert norms[0] / norms[1] == pytest.approx(4.0, rel=0.15)

    def test_exponential_zero_field_energy(self):
        sys = model_problem_exponential()
        grid = Grid2D(9, 1, 1.0, 1.0)
        # u' - u vanishes identically; only the boundary penalty remains
        assert evaluate_energy(sys, grid, np.zeros(9)).value == pytest.approx(500.0)

    def test_poisson_energies(self):
        grid = Grid2D(5, 5, 1.0, 1.0)
        zero_target = model_problem_linear_poisson(0.0, 0.0, grid)
        assert evaluate_energy(zero_target, grid, np.zeros(25)).value == 0.0
        # with the single corner pin the residual (-1, 0) is the only term
        unit_slope = model_problem_linear_poisson(1.0, 0.0)
        assert evaluate_energy(unit_slope, grid, np.zeros(25)).value == pytest.approx(0.5)
        # the degeneracy-removing second pin adds its own quadratic term
        two_pin = model_problem_linear_poisson(1.0, 0.0, grid)
        assert evaluate_energy(two_pin, grid, np.zeros(25)).value == pytest.approx(
            0.5 + 0.5 * grid.hx**2
        )

    def test_poisson_affine_minimizer_is_exact(self):
        grid = Grid2D(6, 4, 1.5, 1.0)
        sys = model_problem_linear_poisson(1.25, -0.5, grid)
        x, y = grid.node_coords()
        assert evaluate_energy(sys, grid, 1.25 * x - 0.5 * y).value < 1e-25

    def test_value_blind_flags(self):
        grid = Grid2D(4, 4, 1.0, 1.0)
        assert model_problem_linear_poisson(1.0, 0.0, grid).value_blind
        assert not model_problem_exponential().value_blind
        assert not GinzburgLandauSystem(1.0, 0.0).value_blind


class TestNullModes:
    def test_poisson_normal_kernel_with_single_pin(self):
        grid = Grid2D(5, 5, 1.0, 1.0)
        sys = model_problem_linear_poisson(1.0, 0.0)  # one pinned corner
        asm = Assembler(sys, grid)
        modes = asm.normal_null_modes
        assert modes.shape[0] == 1
        a = asm.assemble(np.zeros(asm.n_dof))
        nd = asm.normal_data(a)
        N = asm.system_matrix(nd, 0.0)
        assert np.max(np.abs(N.matvec(modes[0]))) < 1e-12

    def test_poisson_two_pins_remove_kernel(self):
        grid = Grid2D(5, 5, 1.0, 1.0)
        sys = model_problem_linear_poisson(1.0, 0.0, grid)
        assert Assembler(sys, grid).normal_null_modes.shape[0] == 0

    def test_gl_lm_null_modes_are_checkerboards(self):
        grid = Grid2D(4, 4, 1.0, 1.0)
        asm = Assembler(GinzburgLandauSystem(4.0, 1.0), grid)
        modes = asm.lm_null_modes
        assert modes.shape[0] == 4
        a = asm.assemble(gl_state(grid, seed=1))
        A = asm.system_matrix(asm.normal_data(a), 1.0)
        assert np.max(np.abs(A.matvec(modes[2]))) < 1e-12


def test_boundary_penalty_validation():
    grid = Grid2D(3, 3, 1.0, 1.0)
    bad = LinearJetSystem(
        np.array([[[1.0, 0.0, 0.0]]]), boundary=[BoundaryPenalty(99, 0.0, 1.0)]
    )
    with pytest.raises(Exception):
        Assembler(bad, grid)
