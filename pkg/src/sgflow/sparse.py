"""Minimal sparse symmetric linear algebra.

A single CSR container covers both the symmetric operators (Gram and
normal matrices) and the rectangular residual Jacobians. The only
iterative solver is Jacobi-preconditioned conjugate gradients, which is
all the descent flows need: every system they solve is symmetric
positive definite as long as the damping parameter is positive.
`dense_solve` is a direct-factorization oracle for tests and small
instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import (
    NumericalBreakdownError,
    ParameterError,
    ShapeError,
    SingularSystemError,
)


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    # einsum keeps a fixed single-threaded summation order, so solver
    # trajectories are bitwise reproducible across runs
    return float(np.einsum("i,i->", a, b))


@dataclass
class CsrMatrix:
    """Compressed sparse row matrix with strictly increasing column indices."""

    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    symmetric: bool = False

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals, symmetric=False):
        """Build from triplets, summing duplicates."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        keys = rows * n_cols + cols
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        vals = vals[order]
        uniq, inverse = np.unique(keys, return_inverse=True)
        data = np.bincount(inverse, weights=vals, minlength=uniq.shape[0])
        urows = uniq // n_cols
        ucols = uniq % n_cols
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(indptr, urows + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(n_rows, n_cols, indptr, ucols.astype(np.int64), data, symmetric)

    @classmethod
    def from_dense(cls, a, symmetric=False, tol=0.0):
        a = np.asarray(a, dtype=np.float64)
        rows, cols = np.nonzero(np.abs(a) > tol)
        return cls.from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols], symmetric)

    @property
    def dimension(self) -> int:
        if self.n_rows != self.n_cols:
            raise ShapeError("dimension is defined for square operators only")
        return self.n_rows

    @property
    def nnz(self) -> int:
        return int(self.data.shape[0])

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != self.n_cols:
            raise ShapeError(f"matvec: expected length {self.n_cols}, got {x.shape[0]}")
        return backend.active().csr_matvec(self.indptr, self.indices, self.data, x)

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """Transpose product A^T y."""
        if y.shape[0] != self.n_rows:
            raise ShapeError(f"rmatvec: expected length {self.n_rows}, got {y.shape[0]}")
        return backend.active().csr_matvec_t(
            self.indptr, self.indices, self.data, y, self.n_cols
        )

    def diagonal(self) -> np.ndarray:
        out = np.zeros(min(self.n_rows, self.n_cols))
        for i in range(out.shape[0]):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            k = np.searchsorted(self.indices[lo:hi], i)
            if k < hi - lo and self.indices[lo + k] == i:
                out[i] = self.data[lo + k]
        return out

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            out[i, self.indices[lo:hi]] = self.data[lo:hi]
        return out

    def with_data(self, data: np.ndarray, symmetric=None) -> "CsrMatrix":
        """Same sparsity pattern, new values."""
        if data.shape != self.data.shape:
            raise ShapeError("with_data: value array does not match the pattern")
        return CsrMatrix(
            self.n_rows,
            self.n_cols,
            self.indptr,
            self.indices,
            data,
            self.symmetric if symmetric is None else symmetric,
        )

    def validate(self):
        """Check structural invariants; raises on violation."""
        if self.indptr.shape[0] != self.n_rows + 1:
            raise ShapeError("indptr length must be n_rows + 1")
        for i in range(self.n_rows):
            row = self.indices[self.indptr[i] : self.indptr[i + 1]]
            if row.size and (np.diff(row) <= 0).any():
                raise ShapeError(f"column indices not strictly increasing in row {i}")
        if self.symmetric:
            d = self.to_dense()
            if not np.array_equal(d, d.T):
                raise ShapeError("symmetric flag set but matrix is not symmetric")


@dataclass
class DiagonalPlusLowRank:
    """Matrix-free SPD operator y -> d*y + scale * J (solve_g(J^T y)).

    Used for the residual-space (capacitance) system of the dual damped
    direction; `solve_g` applies the inverse Gram operator.
    """

    diag: np.ndarray
    jac: CsrMatrix
    solve_g: callable
    scale: float

    @property
    def n_rows(self):
        return self.diag.shape[0]

    def matvec(self, y):
        z = self.solve_g(self.jac.rmatvec(y))
        return self.diag * y + self.scale * self.jac.matvec(z)

    def diagonal(self):
        return self.diag


@dataclass
class SolveReport:
    iterations: int
    residual_norm: float
    converged: bool
    inner_iterations: int = 0


def cg_solve(
    A,
    b,
    tol: float = 1e-10,
    max_iter: int | None = None,
    jacobi: bool = True,
    deflate: np.ndarray | None = None,
):
    """Conjugate gradients for SPD (or deflated semi-definite) systems.

    A is a symmetric `CsrMatrix` or any object with `matvec`, `n_rows`
    and (optionally) `diagonal`. Returns `(x, SolveReport)`; the report
    carries the relative residual norm ||Ax - b|| / ||b|| actually
    achieved. Unconverged solves return the best iterate found rather
    than raising; NaN/Inf during the iteration raises
    `NumericalBreakdownError`.

    `deflate` takes orthonormal rows spanning a known null space of A;
    the right-hand side and the preconditioned residuals are projected
    onto their complement, so the solve returns the minimum-norm
    representative instead of letting the Jacobi preconditioner leak
    arbitrary null components into the iterates.
    """
    if isinstance(A, CsrMatrix) and not A.symmetric:
        raise ShapeError("cg_solve requires an operator marked symmetric")
    if tol <= 0:
        raise ParameterError(f"cg_solve: tol must be positive (got {tol!r})")
    n = A.n_rows
    if b.shape[0] != n:
        raise ShapeError(f"cg_solve: rhs length {b.shape[0]} != {n}")
    if max_iter is None:
        max_iter = 10 * n

    if deflate is not None and deflate.size == 0:
        deflate = None

    def project(v):
        if deflate is None:
            return v
        return v - deflate.T @ (deflate @ v)

    b = project(b)
    norm_b = np.sqrt(_dot(b, b))
    if norm_b == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)

    inv_diag = None
    if jacobi and hasattr(A, "diagonal"):
        d = A.diagonal()
        if np.all(d > 0):
            inv_diag = 1.0 / d

    x = np.zeros(n)
    r = b.copy()
    z = project(inv_diag * r) if inv_diag is not None else r.copy()
    p = z.copy()
    rz = _dot(r, z)
    best_x = x
    best_res = 1.0
    iterations = 0

    for k in range(1, max_iter + 1):
        Ap = A.matvec(p)
        pAp = _dot(p, Ap)
        if not np.isfinite(pAp):
            raise NumericalBreakdownError(
                "cg_solve: non-finite curvature encountered",
                SolveReport(k, best_res, False),
            )
        if pAp <= 0.0:
            # not positive definite along p; stop with the best iterate
            iterations = k - 1
            break
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        res = np.sqrt(_dot(r, r)) / norm_b
        if not np.isfinite(res):
            raise NumericalBreakdownError(
                "cg_solve: non-finite residual encountered",
                SolveReport(k, best_res, False),
            )
        iterations = k
        if res < best_res:
            best_res = res
            best_x = x
        if res <= tol:
            return x, SolveReport(k, res, True)
        z = project(inv_diag * r) if inv_diag is not None else r
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    return best_x, SolveReport(iterations, best_res, False)


def dense_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct solve of a dense square system; test oracle for cg_solve."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError("dense_solve expects a square matrix")
    if a.shape[0] != b.shape[0]:
        raise ShapeError("dense_solve: rhs length does not match")
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"dense_solve: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("dense_solve: system singular to working precision")
    return x
