import math

import numpy as np
import pytest

from ddcflow.mesh import BoundaryTag
from ddcflow.spaces import (
    ScalarSpace,
    TaylorHoodSpace,
    eval_basis,
    interpolate,
    quadrature_rule,
)


def test_scalar_space_dof_counts(unit_square_2, square4):
    assert ScalarSpace(unit_square_2, 1).n_dofs == 4
    assert ScalarSpace(unit_square_2, 2).n_dofs == 9  # 4 vertices + 5 edges
    assert ScalarSpace(square4, 2).n_dofs == 81  # (2*4+1)^2 grid points


def test_unsupported_degree(unit_square_2):
    with pytest.raises(ValueError):
        ScalarSpace(unit_square_2, 3)
    with pytest.raises(ValueError):
        eval_basis(3, [1.0, 0.0, 0.0])


def test_p1_lagrange_property():
    vals, _ = eval_basis(1, [1.0, 0.0, 0.0])
    assert np.allclose(vals, [1.0, 0.0, 0.0])


def test_p2_midpoint_lagrange_property():
    vals, _ = eval_basis(2, [0.5, 0.5, 0.0])
    expected = np.zeros(6)
    expected[3] = 1.0
    assert np.allclose(vals, expected, atol=1e-15)


def test_p2_centroid_values():
    vals, _ = eval_basis(2, [1 / 3, 1 / 3, 1 / 3])
    assert np.allclose(vals[:3], -1.0 / 9.0)
    assert np.allclose(vals[3:], 4.0 / 9.0)


def test_out_of_simplex_point_rejected():
    with pytest.raises(ValueError):
        eval_basis(2, [0.7, 0.7, -0.4])
    with pytest.raises(ValueError):
        eval_basis(1, [0.5, 0.2, 0.2])


def test_partition_of_unity_random_points(rng):
    pts = rng.dirichlet([1.0, 1.0, 1.0], size=100)
    for degree in (1, 2):
        vals, grads = eval_basis(degree, pts)
        assert np.abs(vals.sum(axis=1) - 1.0).max() < 1e-13
        assert np.abs(grads.sum(axis=1)).max() < 1e-13


@pytest.mark.parametrize("degree", [1, 2, 5])
def test_quadrature_integrates_monomials_exactly(degree):
    rule = quadrature_rule(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            got = float(np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b))
            assert got == pytest.approx(exact, abs=1e-14)


def test_quadrature_weights_positive_and_sum_to_area():
    rule = quadrature_rule(5)
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-15)


def test_interpolate_constant_and_linear(square4):
    space = ScalarSpace(square4, 1)
    c = interpolate(lambda x, y: np.full_like(x, 3.25), space)
    assert np.allclose(c, 3.25)
    cx = interpolate(lambda x, y: x, space)
    assert np.allclose(cx, space.dof_coords[:, 0])


def test_p2_interpolation_reproduces_quadratics(square4, rng):
    space = ScalarSpace(square4, 2)
    f = lambda x, y: 2.0 * x**2 - x * y + 0.5 * y**2 + x - 3.0
    coeffs = interpolate(f, space)
    ed = space.edata
    values = np.einsum("qi,ei->eq", ed.phi, coeffs[ed.dofs])
    exact = f(ed.x[:, :, 0], ed.x[:, :, 1])
    assert np.abs(values - exact).max() < 1e-12


def test_boundary_dofs_complete(square4):
    space = ScalarSpace(square4, 2)
    dofs = space.boundary_dofs(BoundaryTag.EXACT)
    coords = space.dof_coords[dofs]
    on_boundary = (
        np.isclose(coords[:, 0], 0.0)
        | np.isclose(coords[:, 0], 1.0)
        | np.isclose(coords[:, 1], 0.0)
        | np.isclose(coords[:, 1], 1.0)
    )
    assert on_boundary.all()
    # 16 boundary cells contribute 16 vertices + 16 midpoints
    assert dofs.size == 32


def test_vector_space_blocking(th4):
    vel = th4.velocity
    assert vel.n_dofs == 2 * vel.scalar.n_dofs
    u = interpolate(lambda x, y: (x, -y), vel)
    assert np.allclose(vel.component(u, 0), vel.scalar.dof_coords[:, 0])
    assert np.allclose(vel.component(u, 1), -vel.scalar.dof_coords[:, 1])
    bd = vel.boundary_dofs(BoundaryTag.EXACT)
    assert bd.size == 2 * vel.scalar.boundary_dofs(BoundaryTag.EXACT).size


def test_taylor_hood_pair(square4):
    th = TaylorHoodSpace(square4)
    assert th.pressure.degree == 1
    assert th.velocity.scalar.degree == 2
    assert th.n_pressure == square4.n_nodes
