"""Residual systems F acting pointwise on jets, and their discrete assembly.

A residual system describes a first-order least-squares energy

    E(u) = 1/2 sum_cells w ||F(jet(u))||^2
         + 1/2 sum_penalties w_b (u[dof] - target)^2

through two cell-local maps: the residual F on one cell's jets and its
Jacobian with respect to the jet entries. Boundary conditions enter as
weighted nodal penalty residuals, which keeps every problem unconstrained
and every normal matrix positive semi-definite.

`Assembler` owns the sparsity machinery for one (system, grid) pair: the
extended residual vector (cell rows then penalty rows), the sparse
Jacobian J = F'(Du) D, the weight vector, and the normal matrix
N = J^T W J on a precomputed pattern. The identity

    E'(u) h = <J h, r>_W   for every nodal direction h

holds exactly with the extended vectors, penalties included.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from . import backend
from .errors import DivergedStateError, ParameterError, ShapeError
from .grid import Grid2D, apply_jet, assemble_gram
from .sparse import CsrMatrix


class BoundaryPenalty(NamedTuple):
    """Weighted nodal least-squares term 1/2 * weight * (u[dof] - target)^2."""

    dof: int
    target: float
    weight: float


DEFAULT_PENALTY_WEIGHT = 1.0e3


class ResidualSystem:
    """Interface for pointwise residuals on first-order jets.

    Subclasses set `field_count`, `residual_dim`, `boundary_penalties`
    and implement `residual` / `jacobian`. Both maps must act cell by
    cell (the output for one cell depends only on that cell's jets) and
    must be pure; `fd_jacobian_check` verifies the Jacobian numerically.
    """

    name = "system"
    field_count: int = 1
    residual_dim: int = 1
    boundary_penalties: Sequence[BoundaryPenalty] = ()

    def residual(self, jets: np.ndarray) -> np.ndarray:
        """(n_cells, field_count, jet_size) -> (n_cells, residual_dim)."""
        raise NotImplementedError

    def jacobian(self, jets: np.ndarray) -> np.ndarray:
        """Partials of `residual` w.r.t. jet entries.

        Returns (n_cells, residual_dim, field_count, jet_size).
        """
        raise NotImplementedError

    @property
    def value_blind(self) -> bool:
        """True when the residual never reads the value entry of any jet.

        Value-blind systems have constant fields in the kernel of their
        Jacobian, which enlarges the null space of the normal matrix.
        """
        return False


class LinearJetSystem(ResidualSystem):
    """Residual that is affine in the jet: F = coeff : jet + offset."""

    def __init__(self, coeff, offset=None, boundary=(), name="linear"):
        coeff = np.asarray(coeff, dtype=np.float64)
        if coeff.ndim != 3:
            raise ShapeError("coeff must have shape (residual_dim, fields, jet_size)")
        self.coeff = coeff
        self.residual_dim, self.field_count, self.jet_size = coeff.shape
        self.offset = (
            np.zeros(self.residual_dim) if offset is None else np.asarray(offset, float)
        )
        if self.offset.shape != (self.residual_dim,):
            raise ShapeError("offset length must equal residual_dim")
        self.boundary_penalties = tuple(BoundaryPenalty(*b) for b in boundary)
        self.name = name

    def residual(self, jets):
        return np.einsum("cfj,mfj->cm", jets, self.coeff) + self.offset

    def jacobian(self, jets):
        shape = (jets.shape[0],) + self.coeff.shape
        return np.ascontiguousarray(np.broadcast_to(self.coeff, shape))

    @property
    def value_blind(self) -> bool:
        return bool(np.all(self.coeff[:, :, 0] == 0.0))


@dataclass
class EnergyValue:
    """Discrete energy, optionally with per-cell residual norms."""

    value: float
    cell_breakdown: np.ndarray | None = None


@dataclass
class Assembly:
    """Residual vector, Jacobian and energy at one iterate."""

    residual: np.ndarray  # cell rows stacked, then penalty rows
    jacobian: CsrMatrix
    weights: np.ndarray
    energy: float
    jets: np.ndarray
    n_cell_rows: int

    @property
    def cell_residuals(self) -> np.ndarray:
        return self.residual[: self.n_cell_rows]


def _weighted_energy(r: np.ndarray, w: np.ndarray) -> float:
    return 0.5 * float(np.einsum("i,i,i->", w, r, r))


class Assembler:
    """Precomputed assembly machinery for one (system, grid) pair.

    Sparsity patterns are built lazily and reused across iterates, so a
    descent loop pays only for value fills and matrix-vector products.
    """

    def __init__(self, system: ResidualSystem, grid: Grid2D):
        if system.field_count < 1 or system.residual_dim < 1:
            raise ParameterError("system must have positive field and residual counts")
        self.system = system
        self.grid = grid
        self.nf = system.field_count
        self.m = system.residual_dim
        self.nn = grid.n_nodes
        self.ncells = grid.n_cells
        self.n_dof = self.nf * self.nn
        self.chain = grid.jet_stencil()
        corners = grid.cell_corner_nodes()
        nc = corners.shape[1]
        self.ldof = self.nf * nc
        offs = np.arange(self.nf, dtype=np.int64)[None, :, None] * self.nn
        self.cell_dofs = (offs + corners[:, None, :]).reshape(self.ncells, self.ldof)

        pens = tuple(system.boundary_penalties)
        self.b_dofs = np.array([p.dof for p in pens], dtype=np.int64)
        self.b_targets = np.array([p.target for p in pens])
        self.b_weights = np.array([p.weight for p in pens])
        if pens and (
            self.b_dofs.min() < 0
            or self.b_dofs.max() >= self.n_dof
            or (self.b_weights <= 0).any()
        ):
            raise ParameterError("boundary penalties need valid dofs and positive weights")
        self.n_cell_rows = self.ncells * self.m
        self.n_rows = self.n_cell_rows + self.b_dofs.shape[0]
        self.weights = np.concatenate(
            [np.full(self.n_cell_rows, grid.cell_weight), self.b_weights]
        )

    # -- patterns ---------------------------------------------------------

    @cached_property
    def jacobian_template(self) -> CsrMatrix:
        """CSR pattern of J; penalty rows carry their constant value 1."""
        nb = self.b_dofs.shape[0]
        cell_nnz = self.n_cell_rows * self.ldof
        indptr = np.empty(self.n_rows + 1, dtype=np.int64)
        indptr[: self.n_cell_rows + 1] = (
            np.arange(self.n_cell_rows + 1, dtype=np.int64) * self.ldof
        )
        indptr[self.n_cell_rows + 1 :] = cell_nnz + 1 + np.arange(nb, dtype=np.int64)
        indices = np.empty(cell_nnz + nb, dtype=np.int64)
        indices[:cell_nnz] = np.repeat(self.cell_dofs, self.m, axis=0).reshape(
            self.ncells, self.m, self.ldof
        ).ravel()
        indices[cell_nnz:] = self.b_dofs
        data = np.zeros(cell_nnz + nb)
        data[cell_nnz:] = 1.0
        return CsrMatrix(self.n_rows, self.n_dof, indptr, indices, data)

    @cached_property
    def _normal_pattern(self):
        rows = self.cell_dofs[:, :, None].astype(np.int64)
        cols = self.cell_dofs[:, None, :].astype(np.int64)
        keys = (rows * self.n_dof + cols).ravel()
        uniq = np.unique(keys)
        pos = np.searchsorted(uniq, keys).reshape(
            self.ncells, self.ldof, self.ldof
        ).astype(np.int64)
        urows = uniq // self.n_dof
        indices = (uniq % self.n_dof).astype(np.int64)
        indptr = np.zeros(self.n_dof + 1, dtype=np.int64)
        np.add.at(indptr, urows + 1, 1)
        np.cumsum(indptr, out=indptr)
        bpos = np.searchsorted(uniq, self.b_dofs * self.n_dof + self.b_dofs)
        return indptr, indices, pos, uniq, bpos

    @cached_property
    def gram(self) -> CsrMatrix:
        return assemble_gram(self.grid, self.nf)

    @cached_property
    def gram_null_modes(self) -> np.ndarray:
        """Orthonormal basis of ker(G): per-field checkerboards on 2D grids.

        The 4-corner-average jet stencil annihilates the alternating
        (-1)^(ix+iy) nodal mode exactly, so the Gram operator has one
        null vector per field in 2D (none in 1D).
        """
        if self.grid.is_1d:
            return np.zeros((0, self.n_dof))
        ix = np.arange(self.grid.nx)
        iy = np.arange(self.grid.ny)
        chk = ((-1.0) ** (ix[None, :] + iy[:, None])).ravel()
        chk /= np.sqrt(self.nn)
        modes = np.zeros((self.nf, self.n_dof))
        for f in range(self.nf):
            modes[f, f * self.nn : (f + 1) * self.nn] = chk
        return modes

    @cached_property
    def lm_null_modes(self) -> np.ndarray:
        """Basis of ker(G) ∩ ker(N): checkerboards of penalty-free fields.

        These are exact null vectors of every damped system lam*G + N,
        so the damped solves deflate them. Jet-based residual rows
        annihilate every checkerboard; a boundary penalty on a field
        removes its mode.
        """
        if self.grid.is_1d:
            return np.zeros((0, self.n_dof))
        penalized = set((self.b_dofs // self.nn).tolist())
        free = [f for f in range(self.nf) if f not in penalized]
        return self.gram_null_modes[free]

    @cached_property
    def normal_null_modes(self) -> np.ndarray:
        """Orthonormal basis of the structural kernel of N = J^T W J + penalties.

        Candidates are the per-field checkerboards (always annihilated
        by jet-based rows) plus, for value-blind systems, the per-field
        constants; the combinations vanishing at every penalty dof
        survive. Used to deflate plain Gauss-Newton solves.
        """
        candidates = []
        if not self.grid.is_1d:
            candidates.extend(self.gram_null_modes)
        if self.system.value_blind:
            for f in range(self.nf):
                e = np.zeros(self.n_dof)
                e[f * self.nn : (f + 1) * self.nn] = 1.0 / np.sqrt(self.nn)
                candidates.append(e)
        if not candidates:
            return np.zeros((0, self.n_dof))
        v0 = np.array(candidates)
        if self.b_dofs.shape[0]:
            # combinations y @ v0 vanishing at the penalty dofs
            b = v0[:, self.b_dofs]
            u_svd, s, _ = np.linalg.svd(b, full_matrices=True)
            rank = int(np.sum(s > 1e-12 * max(s[0], 1.0))) if s.size else 0
            if rank == v0.shape[0]:
                return np.zeros((0, self.n_dof))
            v0 = u_svd[:, rank:].T @ v0
        q, _ = np.linalg.qr(v0.T)
        return np.ascontiguousarray(q[:, : v0.shape[0]].T)

    @cached_property
    def _gram_positions(self) -> np.ndarray:
        """Positions of the Gram entries inside the normal-matrix pattern."""
        g = self.gram
        _, _, _, uniq, _ = self._normal_pattern
        grows = np.repeat(np.arange(self.n_dof, dtype=np.int64), np.diff(g.indptr))
        gkeys = grows * self.n_dof + g.indices
        pos = np.searchsorted(uniq, gkeys)
        if (pos >= uniq.shape[0]).any() or (uniq[pos] != gkeys).any():
            raise ShapeError("Gram pattern escapes the normal-matrix pattern")
        return pos

    # -- evaluations ------------------------------------------------------

    def jets(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.n_dof,):
            raise ShapeError(
                f"state vector must have length {self.n_dof}, got {u.shape}"
            )
        return apply_jet(self.grid, u)

    def _extended_residual(self, u, jets):
        rc = self.system.residual(jets)
        if rc.shape != (self.ncells, self.m):
            raise ShapeError(
                f"residual returned shape {rc.shape}, expected {(self.ncells, self.m)}"
            )
        bad = ~np.isfinite(rc)
        if bad.any():
            raise DivergedStateError(int(np.argwhere(bad)[0][0]))
        r = np.empty(self.n_rows)
        r[: self.n_cell_rows] = rc.ravel()
        if self.b_dofs.shape[0]:
            r[self.n_cell_rows :] = u[self.b_dofs] - self.b_targets
        return r

    def residual_vector(self, u: np.ndarray) -> np.ndarray:
        """Extended residual (cell rows then penalty rows) at u."""
        return self._extended_residual(u, self.jets(u))

    def energy(self, u: np.ndarray) -> float:
        r = self.residual_vector(u)
        return _weighted_energy(r, self.weights)

    def assemble(self, u: np.ndarray) -> Assembly:
        jets = self.jets(u)
        r = self._extended_residual(u, jets)
        localjac = self.system.jacobian(jets)
        expected = (self.ncells, self.m, self.nf, self.grid.jet_size)
        if localjac.shape != expected:
            raise ShapeError(
                f"jacobian returned shape {localjac.shape}, expected {expected}"
            )
        jvals = backend.active().jacobian_values(
            np.ascontiguousarray(localjac), self.chain
        )
        template = self.jacobian_template
        data = template.data.copy()
        data[: self.n_cell_rows * self.ldof] = jvals.ravel()
        jac = template.with_data(data)
        return Assembly(
            residual=r,
            jacobian=jac,
            weights=self.weights,
            energy=_weighted_energy(r, self.weights),
            jets=jets,
            n_cell_rows=self.n_cell_rows,
        )

    def gradient(self, assembly: Assembly) -> np.ndarray:
        """Coefficient (Euclidean) gradient J^T W r of the discrete energy."""
        return assembly.jacobian.rmatvec(self.weights * assembly.residual)

    def normal_data(self, assembly: Assembly) -> np.ndarray:
        """Values of N = J^T W J on the precomputed pattern."""
        _, _, pos, uniq, bpos = self._normal_pattern
        jvals = assembly.jacobian.data[: self.n_cell_rows * self.ldof].reshape(
            self.ncells, self.m, self.ldof
        )
        ndata = backend.active().normal_values(
            jvals, self.grid.cell_weight, pos, uniq.shape[0]
        )
        if bpos.shape[0]:
            np.add.at(ndata, bpos, self.b_weights)
        return ndata

    def system_matrix(self, ndata: np.ndarray, gram_shift: float) -> CsrMatrix:
        """N + gram_shift * G as a symmetric operator on the normal pattern."""
        indptr, indices, _, _, _ = self._normal_pattern
        data = ndata
        if gram_shift != 0.0:
            data = ndata.copy()
            data[self._gram_positions] += gram_shift * self.gram.data
        return CsrMatrix(self.n_dof, self.n_dof, indptr, indices, data, symmetric=True)


# -- module-level operations ----------------------------------------------


def evaluate_energy(
    system: ResidualSystem,
    grid: Grid2D,
    u: np.ndarray,
    with_breakdown: bool = False,
) -> EnergyValue:
    """Discrete quadrature of 1/2 ||F(Du)||^2 plus boundary penalties."""
    asm = Assembler(system, grid)
    jets = asm.jets(np.asarray(u, dtype=np.float64))
    r = asm._extended_residual(u, jets)
    value = _weighted_energy(r, asm.weights)
    breakdown = None
    if with_breakdown:
        rc = r[: asm.n_cell_rows].reshape(asm.ncells, asm.m)
        breakdown = np.sqrt(np.einsum("cm,cm->c", rc, rc))
    return EnergyValue(value, breakdown)


def evaluate_residual_and_jacobian(
    system: ResidualSystem, grid: Grid2D, u: np.ndarray
) -> Assembly:
    """Extended residual vector and sparse Jacobian at u.

    The returned assembly satisfies E'(u) h = <J h, r>_W for all h, with
    boundary penalties included as extra rows.
    """
    return Assembler(system, grid).assemble(np.asarray(u, dtype=np.float64))


def fd_jacobian_check(
    system: ResidualSystem,
    grid: Grid2D,
    u: np.ndarray,
    probes: int = 10,
    seed: int = 0,
    step_scale: float = 1e-5,
) -> float:
    """Worst relative error of J against central differences of F.

    Probes random directions h and compares (F(u+eh) - F(u-eh)) / 2e
    with J h. A correct analytic Jacobian scores well below 1e-6; a
    corrupted one fails loudly.
    """
    if probes < 1:
        raise ParameterError("probes must be >= 1")
    u = np.asarray(u, dtype=np.float64)
    asm = Assembler(system, grid)
    assembly = asm.assemble(u)
    rng = np.random.default_rng(seed)
    unorm = float(np.linalg.norm(u))
    worst = 0.0
    for _ in range(probes):
        h = rng.standard_normal(asm.n_dof)
        eps = step_scale * (unorm + 1.0) / float(np.linalg.norm(h))
        rp = asm.residual_vector(u + eps * h)
        rm = asm.residual_vector(u - eps * h)
        fd = (rp - rm) / (2.0 * eps)
        jh = assembly.jacobian.matvec(h)
        err = float(np.linalg.norm(fd - jh)) / max(float(np.linalg.norm(jh)), 1e-300)
        worst = max(worst, err)
    return worst


def model_problem_exponential() -> LinearJetSystem:
    """1D model problem: derivative equals value on [0, 1], left end at 1.

    The continuum minimizer is exp(x); the discrete minimizer matches it
    to second order in the spacing.
    """
    coeff = np.array([[[-1.0, 1.0]]])  # F = u_x - u
    return LinearJetSystem(
        coeff,
        boundary=[BoundaryPenalty(0, 1.0, DEFAULT_PENALTY_WEIGHT)],
        name="exp1d",
    )


def model_problem_linear_poisson(
    slope_x: float = 1.0, slope_y: float = 0.0, grid: Grid2D | None = None
) -> LinearJetSystem:
    """2D model problem with prescribed constant gradient and a pinned corner.

    F = (u_x - slope_x, u_y - slope_y); the minimizer is the affine field
    with those slopes and value 0 at node 0, reached exactly because the
    jet operator is exact on affine data.

    The residual is value-blind, so with a single pinned node the energy
    is flat along one checkerboard-plus-constant direction (the jet
    stencil's hourglass mode) and the minimizer is a line. Passing the
    grid pins a second node to its affine value, which removes that
    degeneracy and makes the affine field the unique minimizer.
    """
    coeff = np.array([[[0.0, 1.0, 0.0]], [[0.0, 0.0, 1.0]]])
    offset = np.array([-slope_x, -slope_y])
    boundary = [BoundaryPenalty(0, 0.0, DEFAULT_PENALTY_WEIGHT)]
    if grid is not None:
        # weight 1: the target is exactly attainable, so the weight only
        # affects conditioning, and a stiff pin would slow the damped flow
        boundary.append(BoundaryPenalty(1, slope_x * grid.hx, 1.0))
    return LinearJetSystem(coeff, offset, boundary=boundary, name="poisson2d")
