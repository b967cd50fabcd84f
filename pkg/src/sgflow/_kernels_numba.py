"""Numba-compiled twins of the hot kernels in `_kernels_numpy`.

Same signatures and semantics. No fastmath: IEEE evaluation order is
kept so results are reproducible run to run. Kernels release the GIL,
so sweep runs can execute them concurrently from threads.
"""

import numpy as np
from numba import njit

NAME = "numba"

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def jet_apply_2d(v, nf, ny, nx, hx, hy):
    ncx = nx - 1
    ncells = (ny - 1) * ncx
    jets = np.empty((ncells, nf, 3))
    for f in range(nf):
        base = f * ny * nx
        for iy in range(ny - 1):
            for ix in range(ncx):
                n00 = base + iy * nx + ix
                a = v[n00]
                b = v[n00 + 1]
                c = v[n00 + nx]
                d = v[n00 + nx + 1]
                cell = iy * ncx + ix
                jets[cell, f, 0] = 0.25 * ((a + b) + (c + d))
                jets[cell, f, 1] = ((b + d) - (a + c)) / (2.0 * hx)
                jets[cell, f, 2] = ((c + d) - (a + b)) / (2.0 * hy)
    return jets


@njit(**_JIT)
def jet_apply_1d(v, nf, nx, hx):
    jets = np.empty((nx - 1, nf, 2))
    for f in range(nf):
        base = f * nx
        for ix in range(nx - 1):
            a = v[base + ix]
            b = v[base + ix + 1]
            jets[ix, f, 0] = 0.5 * (a + b)
            jets[ix, f, 1] = (b - a) / hx
    return jets


@njit(**_JIT)
def jet_adjoint_2d(jets, w, nf, ny, nx, hx, hy):
    out = np.zeros(nf * ny * nx)
    ncx = nx - 1
    for f in range(nf):
        base = f * ny * nx
        for iy in range(ny - 1):
            for ix in range(ncx):
                cell = iy * ncx + ix
                q = (w * 0.25) * jets[cell, f, 0]
                cx = (w / (2.0 * hx)) * jets[cell, f, 1]
                cy = (w / (2.0 * hy)) * jets[cell, f, 2]
                n00 = base + iy * nx + ix
                out[n00] += (q - cx) - cy
                out[n00 + 1] += (q + cx) - cy
                out[n00 + nx] += (q - cx) + cy
                out[n00 + nx + 1] += (q + cx) + cy
    return out


@njit(**_JIT)
def jet_adjoint_1d(jets, w, nf, nx, hx):
    out = np.zeros(nf * nx)
    for f in range(nf):
        base = f * nx
        for ix in range(nx - 1):
            q = (w * 0.5) * jets[ix, f, 0]
            cx = (w / hx) * jets[ix, f, 1]
            out[base + ix] += q - cx
            out[base + ix + 1] += q + cx
    return out


@njit(**_JIT)
def csr_matvec(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc
    return out


@njit(**_JIT)
def csr_matvec_t(indptr, indices, data, y, n_cols):
    out = np.zeros(n_cols)
    for i in range(indptr.shape[0] - 1):
        yi = y[i]
        if yi != 0.0:
            for k in range(indptr[i], indptr[i + 1]):
                out[indices[k]] += data[k] * yi
    return out


@njit(**_JIT)
def jacobian_values(localjac, chain):
    ncells, m, nf, js = localjac.shape
    nc = chain.shape[1]
    out = np.empty((ncells, m, nf * nc))
    for cell in range(ncells):
        for i in range(m):
            for f in range(nf):
                for k in range(nc):
                    acc = 0.0
                    for j in range(js):
                        acc += localjac[cell, i, f, j] * chain[j, k]
                    out[cell, i, f * nc + k] = acc
    return out


@njit(**_JIT)
def normal_values(jvals, w, pos, nnz):
    ncells, m, ldof = jvals.shape
    out = np.zeros(nnz)
    for cell in range(ncells):
        for l in range(ldof):
            for k in range(ldof):
                acc = 0.0
                for i in range(m):
                    acc += jvals[cell, i, l] * jvals[cell, i, k]
                out[pos[cell, l, k]] += w * acc
    return out


@njit(**_JIT)
def gl_residual(jets, kappa, h0):
    ncells = jets.shape[0]
    out = np.empty((ncells, 6))
    c = kappa / np.sqrt(2.0)
    for i in range(ncells):
        r = jets[i, 0, 0]
        rx = jets[i, 0, 1]
        ry = jets[i, 0, 2]
        s = jets[i, 1, 0]
        sx = jets[i, 1, 1]
        sy = jets[i, 1, 2]
        a = jets[i, 2, 0]
        ay = jets[i, 2, 2]
        b = jets[i, 3, 0]
        bx = jets[i, 3, 1]
        out[i, 0] = rx + a * s
        out[i, 1] = sx - a * r
        out[i, 2] = ry + b * s
        out[i, 3] = sy - b * r
        out[i, 4] = bx - ay - h0
        out[i, 5] = c * ((r * r + s * s) - 1.0)
    return out


@njit(**_JIT)
def gl_jacobian(jets, kappa):
    ncells = jets.shape[0]
    out = np.zeros((ncells, 6, 4, 3))
    c = np.sqrt(2.0) * kappa
    for i in range(ncells):
        r = jets[i, 0, 0]
        s = jets[i, 1, 0]
        a = jets[i, 2, 0]
        b = jets[i, 3, 0]
        out[i, 0, 0, 1] = 1.0
        out[i, 0, 1, 0] = a
        out[i, 0, 2, 0] = s
        out[i, 1, 1, 1] = 1.0
        out[i, 1, 0, 0] = -a
        out[i, 1, 2, 0] = -r
        out[i, 2, 0, 2] = 1.0
        out[i, 2, 1, 0] = b
        out[i, 2, 3, 0] = s
        out[i, 3, 1, 2] = 1.0
        out[i, 3, 0, 0] = -b
        out[i, 3, 3, 0] = -r
        out[i, 4, 3, 1] = 1.0
        out[i, 4, 2, 2] = -1.0
        out[i, 5, 0, 0] = c * r
        out[i, 5, 1, 0] = c * s
    return out
