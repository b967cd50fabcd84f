import numpy as np
import pytest

from sgflow import Grid2D, GinzburgLandauSystem


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def gl_state(grid: Grid2D, seed: int = 0, spread: float = 0.3) -> np.ndarray:
    """Superconducting state plus seeded noise, for derivative tests."""
    r = np.random.default_rng(seed)
    u = np.zeros(4 * grid.n_nodes)
    u[: grid.n_nodes] = 1.0
    return u + spread * r.standard_normal(4 * grid.n_nodes)


def small_gl():
    grid = Grid2D(4, 4, 4.0, 4.0)
    return GinzburgLandauSystem(4.0, 4.0), grid
