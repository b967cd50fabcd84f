import numpy as np
import pytest

from sgflow import (
    CsrMatrix,
    NumericalBreakdownError,
    ShapeError,
    SingularSystemError,
    cg_solve,
    dense_solve,
)
from sgflow import backend


def test_spmv_identity(rng):
    A = CsrMatrix.from_dense(np.eye(7), symmetric=True)
    x = rng.standard_normal(7)
    assert np.array_equal(A.matvec(x), x)


def test_spmv_2x2_hand():
    A = CsrMatrix.from_dense([[2.0, 1.0], [1.0, 2.0]], symmetric=True)
    assert np.array_equal(A.matvec(np.array([1.0, 1.0])), np.array([3.0, 3.0]))


def test_spmv_random_vs_dense_oracle_same_summation_order(rng):
    a = rng.standard_normal((10, 10))
    a[rng.random((10, 10)) < 0.4] = 0.0
    A = CsrMatrix.from_dense(a)
    x = rng.standard_normal(10)
    y = A.matvec(x)
    # oracle reproduces the backend's documented summation order exactly
    prod = A.data * x[A.indices]
    if backend.active_name() == "numba":
        expected = np.array(
            [
                sum((prod[k] for k in range(A.indptr[i], A.indptr[i + 1])), 0.0)
                for i in range(10)
            ]
        )
    else:
        expected = np.array(
            [np.add.reduce(prod[A.indptr[i] : A.indptr[i + 1]]) for i in range(10)]
        )
    assert np.array_equal(y, expected)


def test_spmv_linearity(rng):
    a = rng.standard_normal((12, 12))
    A = CsrMatrix.from_dense(a)
    x, y = rng.standard_normal(12), rng.standard_normal(12)
    lhs = A.matvec(1.7 * x - 0.3 * y)
    rhs = 1.7 * A.matvec(x) - 0.3 * A.matvec(y)
    scale = np.max(np.abs(lhs))
    assert np.max(np.abs(lhs - rhs)) < 1e-13 * scale


def test_rmatvec_is_transpose(rng):
    a = rng.standard_normal((6, 9))
    A = CsrMatrix.from_dense(a)
    y = rng.standard_normal(6)
    assert np.allclose(A.rmatvec(y), a.T @ y, atol=1e-13)


def test_from_coo_sums_duplicates():
    A = CsrMatrix.from_coo(2, 2, [0, 0, 1], [1, 1, 0], [2.0, 3.0, 1.0])
    assert np.allclose(A.to_dense(), [[0.0, 5.0], [1.0, 0.0]])
    A.validate()


def test_validate_rejects_asymmetric_flag():
    A = CsrMatrix.from_dense([[1.0, 2.0], [0.0, 1.0]], symmetric=True)
    with pytest.raises(ShapeError):
        A.validate()


def test_cg_zero_rhs():
    A = CsrMatrix.from_dense(np.eye(4), symmetric=True)
    x, rep = cg_solve(A, np.zeros(4))
    assert np.all(x == 0.0)
    assert rep.iterations == 0
    assert rep.converged


def test_cg_2x2_hand():
    A = CsrMatrix.from_dense([[2.0, 1.0], [1.0, 2.0]], symmetric=True)
    x, rep = cg_solve(A, np.array([3.0, 3.0]), tol=1e-12)
    assert rep.converged
    assert np.allclose(x, [1.0, 1.0], atol=1e-11)


def test_cg_random_spd_vs_dense(rng):
    m = rng.standard_normal((20, 20))
    a = m.T @ m + np.eye(20)
    b = rng.standard_normal(20)
    A = CsrMatrix.from_dense(a, symmetric=True)
    x, rep = cg_solve(A, b, tol=1e-12)
    xd = dense_solve(a, b)
    assert rep.converged
    assert np.linalg.norm(x - xd) / np.linalg.norm(xd) < 1e-8


def test_cg_rejects_nonsymmetric_flag():
    A = CsrMatrix.from_dense([[2.0, 1.0], [0.0, 2.0]])
    with pytest.raises(ShapeError):
        cg_solve(A, np.ones(2))


def test_cg_nan_breakdown():
    A = CsrMatrix.from_coo(
        3, 3, [0, 1, 2], [0, 1, 2], [1.0, np.nan, 1.0], symmetric=True
    )
    with pytest.raises(NumericalBreakdownError):
        cg_solve(A, np.ones(3), jacobi=False)


def test_cg_report_on_unconverged(rng):
    m = rng.standard_normal((30, 30))
    a = m.T @ m + np.eye(30)
    A = CsrMatrix.from_dense(a, symmetric=True)
    x, rep = cg_solve(A, rng.standard_normal(30), tol=1e-14, max_iter=2)
    assert not rep.converged
    assert rep.iterations == 2
    assert rep.residual_norm > 1e-14


def test_cg_deflation_returns_min_norm_solution(rng):
    # rank-deficient PSD system with known kernel direction v
    v = np.ones(6) / np.sqrt(6)
    proj = np.eye(6) - np.outer(v, v)
    m = rng.standard_normal((6, 6))
    a = proj @ (m.T @ m) @ proj
    a = 0.5 * (a + a.T)
    b = proj @ rng.standard_normal(6)
    A = CsrMatrix.from_dense(a, symmetric=True)
    x, rep = cg_solve(A, b, tol=1e-12, deflate=v[None, :])
    assert rep.converged
    assert abs(float(v @ x)) < 1e-12
    xd = np.linalg.lstsq(a, b, rcond=1e-10)[0]
    assert np.linalg.norm(x - xd) / np.linalg.norm(xd) < 1e-8


def test_dense_solve_identity_and_scalar():
    assert np.array_equal(dense_solve(np.eye(3), np.array([1.0, 2.0, 3.0])), [1, 2, 3])
    assert dense_solve(np.array([[2.0]]), np.array([4.0]))[0] == pytest.approx(2.0)


def test_dense_solve_residual_check(rng):
    a = rng.standard_normal((8, 8)) + 8 * np.eye(8)
    b = rng.standard_normal(8)
    x = dense_solve(a, b)
    assert np.linalg.norm(a @ x - b) < 1e-10 * np.linalg.norm(b)


def test_dense_solve_singular():
    with pytest.raises(SingularSystemError):
        dense_solve(np.zeros((2, 2)), np.ones(2))
