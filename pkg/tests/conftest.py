import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from compactwave.grid import GridFn, Mesh, make_uniform_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_interior(mesh: Mesh, rng) -> GridFn:
    """Random element of the zero-boundary space."""
    return GridFn.from_interior(mesh, rng.standard_normal(mesh.interior_shape))


@pytest.fixture
def mesh2d():
    return make_uniform_mesh((1.5, 1.0), (7, 6), 1.0, 10)


@pytest.fixture
def mesh3d():
    return make_uniform_mesh((1.0, 1.2, 0.8), (5, 6, 4), 1.0, 8)


@pytest.fixture
def mesh1d():
    return make_uniform_mesh((2.0,), (9,), 1.0, 10)
