import numpy as np
import pytest

from ddcflow.mesh import build_rectangle_mesh
from ddcflow.spaces import ScalarSpace, TaylorHoodSpace


@pytest.fixture
def unit_square_2():
    """Unit square split into two triangles."""
    return build_rectangle_mesh(0.0, 0.0, 1.0, 1.0, 1, 1)


@pytest.fixture
def square4():
    return build_rectangle_mesh(0.0, 0.0, 1.0, 1.0, 4, 4)


@pytest.fixture
def th4(square4):
    return TaylorHoodSpace(square4)


@pytest.fixture
def large_scale4(square4):
    return ScalarSpace(square4, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
