"""Numba and pure-numpy kernel backends must agree on every operation."""

import numpy as np
import pytest

from sgflow import Assembler, GinzburgLandauSystem, Grid2D, backend_name, set_backend
from sgflow import apply_jet, apply_jet_adjoint, model_problem_exponential
from sgflow.backend import available_backends


pytestmark = pytest.mark.skipif(
    "numba" not in available_backends(), reason="numba backend not installed"
)


@pytest.fixture(autouse=True)
def restore_backend():
    previous = backend_name()
    yield
    set_backend(previous)


def _collect(grid, system, u, jets_shape):
    asm = Assembler(system, grid)
    a = asm.assemble(u)
    return {
        "jets": a.jets,
        "adjoint": apply_jet_adjoint(grid, np.ones(jets_shape)),
        "residual": a.residual,
        "jacobian": a.jacobian.data,
        "normal": asm.normal_data(a),
        "gradient": asm.gradient(a),
        "spmv": a.jacobian.matvec(u),
    }


def test_backends_agree_on_gl(rng):
    grid = Grid2D(7, 6, 1.7, 2.3)
    system = GinzburgLandauSystem(3.0, 1.5)
    u = rng.standard_normal(4 * grid.n_nodes)
    shape = (grid.n_cells, 4, 3)
    set_backend("numpy")
    ref = _collect(grid, system, u, shape)
    set_backend("numba")
    jit = _collect(grid, system, u, shape)
    for key in ref:
        scale = max(float(np.max(np.abs(ref[key]))), 1e-300)
        diff = float(np.max(np.abs(ref[key] - jit[key])))
        assert diff / scale < 1e-14, key


def test_backends_agree_on_1d(rng):
    grid = Grid2D(17, 1, 1.0, 1.0)
    system = model_problem_exponential()
    u = rng.standard_normal(grid.n_nodes)
    shape = (grid.n_cells, 1, 2)
    set_backend("numpy")
    ref = _collect(grid, system, u, shape)
    set_backend("numba")
    jit = _collect(grid, system, u, shape)
    for key in ref:
        scale = max(float(np.max(np.abs(ref[key]))), 1e-300)
        assert float(np.max(np.abs(ref[key] - jit[key]))) / scale < 1e-14, key


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        set_backend("cython")


def test_jet_roundtrip_consistency(rng):
    grid = Grid2D(5, 5, 2.0, 2.0)
    u = rng.standard_normal(grid.n_nodes)
    set_backend("numpy")
    j1 = apply_jet(grid, u)
    set_backend("numba")
    j2 = apply_jet(grid, u)
    assert np.allclose(j1, j2, atol=1e-15)
