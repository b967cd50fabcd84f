"""Rectangular grids and the discrete first-order jet operator.

Nodal fields live on grid nodes (row-major, y-outer); the jet operator D
maps them to cell-centered triples (value, x-derivative, y-derivative)
built from 4-corner averages and edge-pair differences. D is exact on
affine functions, and its adjoint with respect to the cell-weighted jet
inner product gives the Sobolev Gram operator G = D^T W D used as the
descent metric.

Grids with ny = 1 are one-dimensional: cells have two corners and jets
drop the y-derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ParameterError, ShapeError
from .sparse import CsrMatrix


@dataclass(frozen=True)
class Grid2D:
    """Uniform rectangular node grid; ny = 1 degenerates to 1D.

    nx, ny: node counts per axis; lx, ly: physical side lengths. Node
    index = iy * nx + ix; cell index = iy * (nx-1) + ix.
    """

    nx: int
    ny: int
    lx: float
    ly: float

    def __post_init__(self):
        if self.nx < 2:
            raise ParameterError(f"nx must be >= 2 (got {self.nx})")
        if self.ny < 1:
            raise ParameterError(f"ny must be >= 1 (got {self.ny})")
        if self.lx <= 0 or self.ly <= 0:
            raise ParameterError("side lengths must be positive")

    @property
    def is_1d(self) -> bool:
        return self.ny == 1

    @property
    def hx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        if self.is_1d:
            raise ParameterError("hy is undefined on a 1D grid")
        return self.ly / (self.ny - 1)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def n_cells(self) -> int:
        return (self.nx - 1) * max(self.ny - 1, 1)

    @property
    def cell_weight(self) -> float:
        """Midpoint-rule quadrature weight per cell."""
        return self.hx if self.is_1d else self.hx * self.hy

    @property
    def jet_size(self) -> int:
        return 2 if self.is_1d else 3

    @property
    def corners_per_cell(self) -> int:
        return 2 if self.is_1d else 4

    def node_coords(self):
        """(x, y) coordinates of all nodes, each of length n_nodes."""
        x = np.linspace(0.0, self.lx, self.nx)
        if self.is_1d:
            return x, np.zeros(self.nx)
        y = np.linspace(0.0, self.ly, self.ny)
        xx, yy = np.meshgrid(x, y)
        return xx.ravel(), yy.ravel()

    def cell_centers(self):
        """(x, y) coordinates of cell centers, each of length n_cells."""
        xc = (np.arange(self.nx - 1) + 0.5) * self.hx
        if self.is_1d:
            return xc, np.zeros(self.nx - 1)
        yc = (np.arange(self.ny - 1) + 0.5) * self.hy
        xx, yy = np.meshgrid(xc, yc)
        return xx.ravel(), yy.ravel()

    def cell_corner_nodes(self) -> np.ndarray:
        """Node indices of each cell's corners, (n_cells, 2 or 4), ascending."""
        ix = np.arange(self.nx - 1)
        if self.is_1d:
            return np.stack([ix, ix + 1], axis=1).astype(np.int64)
        iy = np.arange(self.ny - 1)
        base = (iy[:, None] * self.nx + ix[None, :]).ravel()
        return np.stack(
            [base, base + 1, base + self.nx, base + self.nx + 1], axis=1
        ).astype(np.int64)

    def jet_stencil(self) -> np.ndarray:
        """Local jet matrix (jet_size, corners): jet = stencil @ corner values."""
        if self.is_1d:
            return np.array([[0.5, 0.5], [-1.0 / self.hx, 1.0 / self.hx]])
        cx = 1.0 / (2.0 * self.hx)
        cy = 1.0 / (2.0 * self.hy)
        return np.array(
            [
                [0.25, 0.25, 0.25, 0.25],
                [-cx, cx, -cx, cx],
                [-cy, -cy, cy, cy],
            ]
        )


def field_count_of(grid: Grid2D, u: np.ndarray) -> int:
    """Number of stacked nodal fields in u; validates the length."""
    u = np.asarray(u)
    if u.ndim != 1 or u.shape[0] == 0 or u.shape[0] % grid.n_nodes != 0:
        raise ShapeError(
            f"nodal vector of length {u.shape} does not stack fields of "
            f"{grid.n_nodes} nodes"
        )
    return u.shape[0] // grid.n_nodes


def apply_jet(grid: Grid2D, u: np.ndarray) -> np.ndarray:
    """Discrete jet Du: nodal fields -> (n_cells, field_count, jet_size).

    Per cell: value = corner average, derivatives = edge-pair differences
    over the spacing; exact for affine nodal data.
    """
    u = np.ascontiguousarray(u, dtype=np.float64)
    nf = field_count_of(grid, u)
    k = backend.active()
    if grid.is_1d:
        return k.jet_apply_1d(u, nf, grid.nx, grid.hx)
    return k.jet_apply_2d(u, nf, grid.ny, grid.nx, grid.hx, grid.hy)


def apply_jet_adjoint(grid: Grid2D, jets: np.ndarray) -> np.ndarray:
    """Adjoint D^T W of the jet operator: ⟨Du, j⟩_W = ⟨u, D^T W j⟩."""
    jets = np.ascontiguousarray(jets, dtype=np.float64)
    if jets.ndim != 3 or jets.shape[0] != grid.n_cells or jets.shape[2] != grid.jet_size:
        raise ShapeError(
            f"jet array shape {jets.shape} does not match grid with "
            f"{grid.n_cells} cells and jet size {grid.jet_size}"
        )
    nf = jets.shape[1]
    k = backend.active()
    if grid.is_1d:
        return k.jet_adjoint_1d(jets, grid.cell_weight, nf, grid.nx, grid.hx)
    return k.jet_adjoint_2d(
        jets, grid.cell_weight, nf, grid.ny, grid.nx, grid.hx, grid.hy
    )


def jet_inner(grid: Grid2D, j1: np.ndarray, j2: np.ndarray) -> float:
    """Cell-weighted inner product on jet fields."""
    return grid.cell_weight * float(np.einsum("cfj,cfj->", j1, j2))


def assemble_gram(grid: Grid2D, field_count: int = 1) -> CsrMatrix:
    """Sobolev Gram operator G = D^T W D, block diagonal over fields.

    Symmetric positive semi-definite. On 1D grids G is definite; on 2D
    grids the jet stencil annihilates exactly the per-field
    corner-alternating (checkerboard) mode, so G has a one-dimensional
    kernel per field. Gradients of jet-based energies are orthogonal to
    that kernel, so conjugate-gradient solves against G remain
    consistent and return the minimum-norm representative.
    """
    if field_count < 1:
        raise ParameterError("field_count must be >= 1")
    stencil = grid.jet_stencil()
    local = grid.cell_weight * (stencil.T @ stencil)  # (nc, nc)
    corners = grid.cell_corner_nodes()
    nc = corners.shape[1]
    nn = grid.n_nodes

    rows = np.repeat(corners, nc, axis=1).ravel()
    cols = np.tile(corners, (1, nc)).ravel()
    vals = np.tile(local.ravel(), grid.n_cells)
    if field_count > 1:
        offs = np.arange(field_count, dtype=np.int64) * nn
        rows = (rows[None, :] + offs[:, None]).ravel()
        cols = (cols[None, :] + offs[:, None]).ravel()
        vals = np.tile(vals, field_count)
    n = field_count * nn
    return CsrMatrix.from_coo(n, n, rows, cols, vals, symmetric=True)
