"""Lagrange finite element spaces on triangles.

Provides continuous P1 and P2 scalar spaces, a two-component vector
wrapper with coefficients blocked by component (all x-dofs, then all
y-dofs), and the Taylor-Hood velocity/pressure pair.  Field vectors are
plain float arrays of length ``space.n_dofs``.

A single 7-point quadrature rule, exact through degree 5, is used for
every integral so that all polynomial terms of the discrete equations
are integrated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import BoundaryTag, Mesh, edge_table

__all__ = [
    "QuadratureRule",
    "quadrature_rule",
    "DEFAULT_RULE",
    "eval_basis",
    "ScalarSpace",
    "VectorSpace",
    "TaylorHoodSpace",
    "ElementData",
    "interpolate",
]

# gradients of the barycentric coordinates on the reference triangle
# with vertices (0,0), (1,0), (0,1)
_BARY_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle.

    ``points`` are barycentric coordinates, ``weights`` sum to the
    reference triangle area 1/2, and polynomials up to ``degree`` are
    integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


def quadrature_rule(degree: int) -> QuadratureRule:
    if degree <= 1:
        pts = np.array([[1.0, 1.0, 1.0]]) / 3.0
        w = np.array([1.0])
        deg = 1
    elif degree == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        w = np.full(3, 1.0 / 3.0)
        deg = 2
    elif degree <= 5:
        s15 = math.sqrt(15.0)
        a1, b1 = (9.0 - 2.0 * s15) / 21.0, (6.0 + s15) / 21.0
        a2, b2 = (9.0 + 2.0 * s15) / 21.0, (6.0 - s15) / 21.0
        w1 = (155.0 + s15) / 1200.0
        w2 = (155.0 - s15) / 1200.0
        pts = np.array(
            [
                [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                [a1, b1, b1],
                [b1, a1, b1],
                [b1, b1, a1],
                [a2, b2, b2],
                [b2, a2, b2],
                [b2, b2, a2],
            ]
        )
        w = np.array([9.0 / 40.0, w1, w1, w1, w2, w2, w2])
        deg = 5
    else:
        raise ValueError(f"no quadrature rule of degree {degree}")
    return QuadratureRule(pts, 0.5 * w, deg)


DEFAULT_RULE = quadrature_rule(5)


def eval_basis(degree: int, points) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate Lagrange basis functions at barycentric points.

    Returns ``(values, gradients)`` where the gradients are taken with
    respect to the reference coordinates.  ``points`` is a single
    barycentric triple or an array of shape (q, 3); the leading axis is
    squeezed for a single point.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != 3:
        raise ValueError("barycentric points must have three components")
    if np.any(np.abs(pts.sum(axis=1) - 1.0) > 1e-12) or np.any(pts < -1e-12):
        raise ValueError("point outside the reference triangle")

    lam = pts
    q = lam.shape[0]
    if degree == 1:
        vals = lam.copy()
        grads = np.broadcast_to(_BARY_GRADS, (q, 3, 2)).copy()
    elif degree == 2:
        vals = np.empty((q, 6))
        grads = np.empty((q, 6, 2))
        for i in range(3):
            vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
            grads[:, i] = (4.0 * lam[:, i, None] - 1.0) * _BARY_GRADS[i]
        for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
            vals[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
            grads[:, 3 + k] = 4.0 * (
                lam[:, j, None] * _BARY_GRADS[i] + lam[:, i, None] * _BARY_GRADS[j]
            )
    else:
        raise ValueError("only degrees 1 and 2 are supported")

    if np.asarray(points).ndim == 1:
        return vals[0], grads[0]
    return vals, grads


@dataclass(frozen=True)
class ElementData:
    """Per-element quantities precomputed for assembly.

    dofs : (n_el, n_basis) global dof ids
    phi : (q, n_basis) basis values at quadrature points
    grad : (n_el, q, n_basis, 2) physical basis gradients
    wdet : (n_el, q) quadrature weights times Jacobian determinants
    x : (n_el, q, 2) physical quadrature point coordinates
    inv_jac : (n_el, 2, 2) inverse element Jacobians
    """

    dofs: np.ndarray
    phi: np.ndarray
    grad: np.ndarray
    wdet: np.ndarray
    x: np.ndarray
    inv_jac: np.ndarray


class ScalarSpace:
    """Continuous piecewise polynomial space of degree 1 or 2.

    P1 dofs sit at mesh vertices (dof id equals node id); P2 adds one
    dof per edge midpoint.  Dof numbering is determined entirely by the
    mesh ordering, so identical meshes give identical spaces.
    """

    def __init__(self, mesh: Mesh, degree: int):
        if degree not in (1, 2):
            raise ValueError("only degrees 1 and 2 are supported")
        self.mesh = mesh
        self.degree = degree
        edges, tri2edge = edge_table(mesh.triangles)
        self.edges = edges
        self.tri2edge = tri2edge

        if degree == 1:
            self.element_dofs = mesh.triangles.copy()
            self.dof_coords = mesh.nodes.copy()
        else:
            self.element_dofs = np.hstack(
                [mesh.triangles, mesh.n_nodes + tri2edge]
            ).astype(np.int64)
            midpoints = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
            self.dof_coords = np.vstack([mesh.nodes, midpoints])
        self.n_dofs = self.dof_coords.shape[0]

        self._boundary_dofs = self._collect_boundary_dofs()
        self._edata: ElementData | None = None

    def _collect_boundary_dofs(self):
        sorted_facets = np.sort(self.mesh.facets, axis=1)
        if self.degree == 2:
            lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}
            facet_edge = np.array(
                [lookup[(int(a), int(b))] for a, b in sorted_facets], dtype=np.int64
            )
        out = {}
        for tag in BoundaryTag:
            sel = self.mesh.facet_tags == int(tag)
            if not np.any(sel):
                continue
            dofs = [self.mesh.facets[sel].ravel()]
            if self.degree == 2:
                dofs.append(self.mesh.n_nodes + facet_edge[sel])
            out[tag] = np.unique(np.concatenate(dofs))
        return out

    def boundary_dofs(self, tag: BoundaryTag) -> np.ndarray:
        """Sorted dof ids lying on facets carrying ``tag``."""
        return self._boundary_dofs.get(tag, np.empty(0, dtype=np.int64))

    @property
    def boundary_tags(self):
        return tuple(self._boundary_dofs.keys())

    @property
    def edata(self) -> ElementData:
        """Assembly tables for the default quadrature rule (cached)."""
        if self._edata is None:
            self._edata = self._build_edata(DEFAULT_RULE)
        return self._edata

    def _build_edata(self, rule: QuadratureRule) -> ElementData:
        mesh = self.mesh
        phi, grad_ref = eval_basis(self.degree, rule.points)
        tri = mesh.triangles
        p0 = mesh.nodes[tri[:, 0]]
        jac = np.stack(
            [mesh.nodes[tri[:, 1]] - p0, mesh.nodes[tri[:, 2]] - p0], axis=2
        )  # (n_el, 2, 2), columns are edge vectors
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv /= det[:, None, None]

        # physical gradient = J^{-T} grad_ref
        grad = np.einsum("eba,qnb->eqna", inv, grad_ref)
        wdet = rule.weights[None, :] * np.abs(det)[:, None]
        ref_xy = rule.points[:, 1:]  # (xi, eta) of each quadrature point
        x = p0[:, None, :] + np.einsum("eab,qb->eqa", jac, ref_xy)
        return ElementData(self.element_dofs, phi, grad, wdet, x, inv)


class VectorSpace:
    """Two-component field over one scalar space.

    Coefficients are blocked by component: entries ``[0, n)`` hold the
    x-component, ``[n, 2n)`` the y-component, where ``n`` is the number
    of scalar dofs.
    """

    def __init__(self, scalar: ScalarSpace):
        self.scalar = scalar
        self.mesh = scalar.mesh
        self.n_dofs = 2 * scalar.n_dofs

    @property
    def n_scalar(self) -> int:
        return self.scalar.n_dofs

    def boundary_dofs(self, tag: BoundaryTag) -> np.ndarray:
        s = self.scalar.boundary_dofs(tag)
        return np.concatenate([s, s + self.scalar.n_dofs])

    def component(self, coeffs: np.ndarray, c: int) -> np.ndarray:
        n = self.scalar.n_dofs
        return coeffs[c * n : (c + 1) * n]


class TaylorHoodSpace:
    """Inf-sup stable P2 velocity / P1 pressure pair on one mesh."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.velocity = VectorSpace(ScalarSpace(mesh, 2))
        self.pressure = ScalarSpace(mesh, 1)

    @property
    def n_velocity(self) -> int:
        return self.velocity.n_dofs

    @property
    def n_pressure(self) -> int:
        return self.pressure.n_dofs


def interpolate(f, space) -> np.ndarray:
    """Nodal interpolation of a spatial function.

    For a :class:`ScalarSpace`, ``f(x, y)`` must return values; for a
    :class:`VectorSpace` it must return a pair of component arrays.
    """
    if isinstance(space, VectorSpace):
        x, y = space.scalar.dof_coords[:, 0], space.scalar.dof_coords[:, 1]
        u1, u2 = f(x, y)
        return np.concatenate(
            [np.broadcast_to(u1, x.shape), np.broadcast_to(u2, x.shape)]
        ).astype(float)
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    return np.broadcast_to(f(x, y), x.shape).astype(float).copy()
