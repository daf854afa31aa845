import warnings

import pytest

from qflab import curves, flatsurf, mesh
from qflab.almostfuchsian import AlmostFuchsianPath

S_GRID = (8e-3, 4e-3, 2e-3, 1e-3)
H_TARGET = 0.05


@pytest.fixture(scope="session")
def l_surface():
    return curves.l_shape()


@pytest.fixture(scope="session")
def l_flat(l_surface):
    return flatsurf.realize(l_surface)


@pytest.fixture(scope="session")
def l_mesh(l_flat):
    return mesh.triangulate(l_flat, H_TARGET)


@pytest.fixture(scope="session")
def l_hyp(l_mesh):
    return mesh.uniformize(l_mesh)


@pytest.fixture(scope="session")
def l_path(l_flat, l_mesh, l_hyp):
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        return AlmostFuchsianPath(l_mesh, l_hyp, mesh.qd_field(l_flat, l_mesh))


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
