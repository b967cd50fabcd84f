"""Pure-numpy implementations of the hot kernels.

This is the fallback backend; `_kernels_numba` provides jit-compiled
twins with identical signatures. Every function here is deterministic:
reductions use `np.add.reduce`/`bincount`/`einsum`, whose summation
order is fixed for fixed input shapes.
"""

import numpy as np

NAME = "numpy"


# --------------------------------------------------------------------------
# jet operator D and its adjoint
# --------------------------------------------------------------------------

def jet_apply_2d(v, nf, ny, nx, hx, hy):
    """Nodal values (nf*ny*nx,) -> cell jets (ncells, nf, 3) = (u0, ux, uy)."""
    g = v.reshape(nf, ny, nx)
    a = g[:, :-1, :-1]
    b = g[:, :-1, 1:]
    c = g[:, 1:, :-1]
    d = g[:, 1:, 1:]
    ncells = (ny - 1) * (nx - 1)
    jets = np.empty((ncells, nf, 3))
    jets[:, :, 0] = (0.25 * ((a + b) + (c + d))).reshape(nf, ncells).T
    jets[:, :, 1] = (((b + d) - (a + c)) / (2.0 * hx)).reshape(nf, ncells).T
    jets[:, :, 2] = (((c + d) - (a + b)) / (2.0 * hy)).reshape(nf, ncells).T
    return jets


def jet_apply_1d(v, nf, nx, hx):
    """Nodal values (nf*nx,) -> cell jets (nx-1, nf, 2) = (u0, ux)."""
    g = v.reshape(nf, nx)
    a = g[:, :-1]
    b = g[:, 1:]
    jets = np.empty((nx - 1, nf, 2))
    jets[:, :, 0] = (0.5 * (a + b)).T
    jets[:, :, 1] = ((b - a) / hx).T
    return jets


def jet_adjoint_2d(jets, w, nf, ny, nx, hx, hy):
    """Adjoint of jet_apply_2d with cell weight w: returns (nf*ny*nx,)."""
    ncells = (ny - 1) * (nx - 1)
    q = (w * 0.25) * jets[:, :, 0].T.reshape(nf, ny - 1, nx - 1)
    cx = (w / (2.0 * hx)) * jets[:, :, 1].T.reshape(nf, ny - 1, nx - 1)
    cy = (w / (2.0 * hy)) * jets[:, :, 2].T.reshape(nf, ny - 1, nx - 1)
    out = np.zeros(nf * ny * nx)
    g = out.reshape(nf, ny, nx)
    g[:, :-1, :-1] += (q - cx) - cy
    g[:, :-1, 1:] += (q + cx) - cy
    g[:, 1:, :-1] += (q - cx) + cy
    g[:, 1:, 1:] += (q + cx) + cy
    return out


def jet_adjoint_1d(jets, w, nf, nx, hx):
    q = (w * 0.5) * jets[:, :, 0].T
    cx = (w / hx) * jets[:, :, 1].T
    out = np.zeros(nf * nx)
    g = out.reshape(nf, nx)
    g[:, :-1] += q - cx
    g[:, 1:] += q + cx
    return out


# --------------------------------------------------------------------------
# CSR products
# --------------------------------------------------------------------------

def csr_matvec(indptr, indices, data, x):
    """y = A x for CSR (indptr, indices, data)."""
    prod = data * x[indices]
    out = np.zeros(indptr.shape[0] - 1)
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    if nonempty.size:
        out[nonempty] = np.add.reduceat(prod, indptr[nonempty])
    return out


def csr_matvec_t(indptr, indices, data, y, n_cols):
    """z = A^T y for CSR A with n_cols columns."""
    counts = np.diff(indptr)
    scaled = data * np.repeat(y, counts)
    return np.bincount(indices, weights=scaled, minlength=n_cols)


# --------------------------------------------------------------------------
# residual-system assembly
# --------------------------------------------------------------------------

def jacobian_values(localjac, chain):
    """Chain per-cell jet Jacobians through the jet stencil.

    localjac: (ncells, m, nf, js) partials of the residual w.r.t. jet
    entries; chain: (js, nc) jet stencil (jet entry -> corner weight).
    Returns CSR row values (ncells, m, nf*nc), column order = fields
    outer, corners inner.
    """
    ncells, m, nf, _ = localjac.shape
    vals = np.einsum("cifj,jk->cifk", localjac, chain)
    return np.ascontiguousarray(vals.reshape(ncells, m, nf * chain.shape[1]))


def normal_values(jvals, w, pos, nnz):
    """Accumulate w * B_c^T B_c over cells into a CSR data array.

    jvals: (ncells, m, ldof) per-cell Jacobian rows; w: scalar cell
    weight; pos: (ncells, ldof, ldof) positions into the output CSR
    data of length nnz.
    """
    local = w * np.einsum("cil,cik->clk", jvals, jvals)
    return np.bincount(pos.ravel(), weights=local.ravel(), minlength=nnz)


# --------------------------------------------------------------------------
# Ginzburg-Landau pointwise residual and Jacobian on jets
# --------------------------------------------------------------------------

def gl_residual(jets, kappa, h0):
    """Six residual components per cell from jets of (r, s, a, b)."""
    r, rx, ry = jets[:, 0, 0], jets[:, 0, 1], jets[:, 0, 2]
    s, sx, sy = jets[:, 1, 0], jets[:, 1, 1], jets[:, 1, 2]
    a, _, ay = jets[:, 2, 0], jets[:, 2, 1], jets[:, 2, 2]
    b, bx, _ = jets[:, 3, 0], jets[:, 3, 1], jets[:, 3, 2]
    out = np.empty((jets.shape[0], 6))
    out[:, 0] = rx + a * s
    out[:, 1] = sx - a * r
    out[:, 2] = ry + b * s
    out[:, 3] = sy - b * r
    out[:, 4] = bx - ay - h0
    out[:, 5] = (kappa / np.sqrt(2.0)) * ((r * r + s * s) - 1.0)
    return out


def gl_jacobian(jets, kappa):
    """Partials of gl_residual w.r.t. jet entries: (ncells, 6, 4, 3)."""
    r = jets[:, 0, 0]
    s = jets[:, 1, 0]
    a = jets[:, 2, 0]
    b = jets[:, 3, 0]
    out = np.zeros((jets.shape[0], 6, 4, 3))
    out[:, 0, 0, 1] = 1.0
    out[:, 0, 1, 0] = a
    out[:, 0, 2, 0] = s
    out[:, 1, 1, 1] = 1.0
    out[:, 1, 0, 0] = -a
    out[:, 1, 2, 0] = -r
    out[:, 2, 0, 2] = 1.0
    out[:, 2, 1, 0] = b
    out[:, 2, 3, 0] = s
    out[:, 3, 1, 2] = 1.0
    out[:, 3, 0, 0] = -b
    out[:, 3, 3, 0] = -r
    out[:, 4, 3, 1] = 1.0
    out[:, 4, 2, 2] = -1.0
    c = np.sqrt(2.0) * kappa
    out[:, 5, 0, 0] = c * r
    out[:, 5, 1, 0] = c * s
    return out
