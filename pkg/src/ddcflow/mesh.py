"""Structured triangular meshes with tagged boundary facets.

A mesh is an immutable bundle of node coordinates, counterclockwise
triangles and boundary facets carrying a :class:`BoundaryTag`.  All
builders split quadrilateral cells along the bottom-left to top-right
diagonal, so a given set of arguments always produces the identical
mesh and downstream results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "BoundaryTag",
    "Mesh",
    "build_rectangle_mesh",
    "build_step_channel_mesh",
    "uniform_refine",
    "triangle_areas",
    "total_area",
    "edge_table",
]


class BoundaryTag(IntEnum):
    """Classification of a boundary facet."""

    INFLOW = 0
    OUTFLOW = 1
    WALL = 2
    EXACT = 3


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation of a polygonal domain.

    Attributes
    ----------
    nodes : (n_nodes, 2) float array of vertex coordinates.
    triangles : (n_triangles, 3) int array, vertices counterclockwise.
    facets : (n_facets, 2) int array of boundary edge endpoints.
    facet_tags : (n_facets,) int array of :class:`BoundaryTag` values.
    h_min, h_max : shortest and longest triangle edge length.

    Meshes are treated as immutable after construction; none of the
    solver stages writes to these arrays.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    h_min: float
    h_max: float

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


def triangle_areas(mesh: Mesh) -> np.ndarray:
    """Signed areas of all triangles (positive for counterclockwise)."""
    p = mesh.nodes
    t = mesh.triangles
    d1 = p[t[:, 1]] - p[t[:, 0]]
    d2 = p[t[:, 2]] - p[t[:, 0]]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def total_area(mesh: Mesh) -> float:
    return float(np.sum(triangle_areas(mesh)))


def edge_table(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique mesh edges and the triangle-to-edge incidence map.

    Returns ``(edges, tri2edge)`` where ``edges`` is (n_edges, 2) with
    sorted endpoint indices in lexicographic order and ``tri2edge`` is
    (n_triangles, 3) giving the edge id of local edges (0,1), (1,2), (2,0).
    """
    local = triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    local.sort(axis=1)
    edges, inverse = np.unique(local, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


def _edge_length_bounds(nodes, triangles):
    a = nodes[triangles]
    lengths = np.concatenate(
        [
            np.linalg.norm(a[:, 1] - a[:, 0], axis=1),
            np.linalg.norm(a[:, 2] - a[:, 1], axis=1),
            np.linalg.norm(a[:, 0] - a[:, 2], axis=1),
        ]
    )
    return float(lengths.min()), float(lengths.max())


def _boundary_edge_set(triangles):
    """Sorted endpoint pairs of edges owned by exactly one triangle."""
    edges, tri2edge = edge_table(triangles)
    counts = np.bincount(tri2edge.ravel(), minlength=edges.shape[0])
    if counts.max() > 2:
        raise ValueError("non-conforming mesh: edge shared by more than two triangles")
    return edges[counts == 1]


def _finalize(nodes, triangles, facets, tags) -> Mesh:
    """Validate invariants and assemble the mesh object."""
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    facets = np.ascontiguousarray(facets, dtype=np.int64)
    tags = np.ascontiguousarray(tags, dtype=np.int64)
    if not np.isfinite(nodes).all():
        raise ValueError("mesh nodes contain non-finite coordinates")

    p = nodes
    d1 = p[triangles[:, 1]] - p[triangles[:, 0]]
    d2 = p[triangles[:, 2]] - p[triangles[:, 0]]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(areas <= 0.0):
        raise ValueError("mesh contains degenerate or clockwise triangles")

    boundary = _boundary_edge_set(triangles)
    given = np.sort(facets, axis=1)
    order = np.lexsort((given[:, 1], given[:, 0]))
    if given.shape != boundary.shape or not np.array_equal(given[order], boundary):
        raise ValueError("boundary facets do not match the triangulation boundary")

    h_min, h_max = _edge_length_bounds(nodes, triangles)
    return Mesh(nodes, triangles, facets, tags, h_min, h_max)


def build_rectangle_mesh(
    x0: float, y0: float, x1: float, y1: float, nx: int, ny: int
) -> Mesh:
    """Structured triangulation of the rectangle [x0,x1] x [y0,y1].

    Each of the nx*ny grid cells is split into two triangles along the
    diagonal from its lower-left to its upper-right corner.  All
    boundary facets are tagged :attr:`BoundaryTag.EXACT`, appropriate
    for problems with prescribed boundary data everywhere.
    """
    if not (x1 > x0 and y1 > y0):
        raise ValueError("rectangle extents must be positive")
    if nx < 1 or ny < 1:
        raise ValueError("cell counts must be at least 1")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys)  # row j is the line y = ys[j]
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    n00 = (j * (nx + 1) + i).ravel()
    n10 = n00 + 1
    n01 = n00 + (nx + 1)
    n11 = n01 + 1
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    facets = _boundary_edge_set(triangles)
    tags = np.full(facets.shape[0], int(BoundaryTag.EXACT), dtype=np.int64)
    return _finalize(nodes, triangles, facets, tags)


def build_step_channel_mesh(h: float) -> Mesh:
    """Channel [0,40] x [0,10] with a unit square block removed.

    The blocked region is [5,6] x [0,1] at the channel floor.  The mesh
    is the uniform structured grid of spacing ``h`` with the cells of the
    block deleted, which requires ``h`` to divide the unit step side.
    Facets on x=0 are tagged INFLOW, on x=40 OUTFLOW, and every other
    boundary piece (floor, ceiling, step) WALL.
    """
    if h <= 0:
        raise ValueError("mesh spacing must be positive")
    n = 1.0 / h
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValueError("mesh spacing must divide the unit step side")
    n = int(round(n))
    nx, ny = 40 * n, 10 * n

    base = build_rectangle_mesh(0.0, 0.0, 40.0, 10.0, nx, ny)
    centroids = base.nodes[base.triangles].mean(axis=1)
    inside = (
        (centroids[:, 0] > 5.0)
        & (centroids[:, 0] < 6.0)
        & (centroids[:, 1] > 0.0)
        & (centroids[:, 1] < 1.0)
    )
    triangles = base.triangles[~inside]

    keep = np.unique(triangles)
    renum = np.full(base.n_nodes, -1, dtype=np.int64)
    renum[keep] = np.arange(keep.size)
    nodes = base.nodes[keep]
    triangles = renum[triangles]

    facets = _boundary_edge_set(triangles)
    mid = 0.5 * (nodes[facets[:, 0]] + nodes[facets[:, 1]])
    tags = np.full(facets.shape[0], int(BoundaryTag.WALL), dtype=np.int64)
    tol = 1e-9
    tags[np.abs(mid[:, 0]) < tol] = int(BoundaryTag.INFLOW)
    tags[np.abs(mid[:, 0] - 40.0) < tol] = int(BoundaryTag.OUTFLOW)
    return _finalize(nodes, triangles, facets, tags)


def uniform_refine(mesh: Mesh) -> Mesh:
    """Split every triangle into four by connecting edge midpoints.

    Child triangles inherit the parent orientation, boundary facets are
    split in two and keep their tag, and every parent node is preserved
    with its index and coordinates.
    """
    edges, tri2edge = edge_table(mesh.triangles)
    midpoints = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    nodes = np.vstack([mesh.nodes, midpoints])

    t = mesh.triangles
    m01 = mesh.n_nodes + tri2edge[:, 0]
    m12 = mesh.n_nodes + tri2edge[:, 1]
    m20 = mesh.n_nodes + tri2edge[:, 2]
    children = np.empty((4 * mesh.n_triangles, 3), dtype=np.int64)
    children[0::4] = np.column_stack([t[:, 0], m01, m20])
    children[1::4] = np.column_stack([t[:, 1], m12, m01])
    children[2::4] = np.column_stack([t[:, 2], m20, m12])
    children[3::4] = np.column_stack([m01, m12, m20])

    # locate the parent facets in the edge table to find their midpoints
    sorted_facets = np.sort(mesh.facets, axis=1)
    lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(edges)}
    facet_edge = np.array(
        [lookup[(int(a), int(b))] for a, b in sorted_facets], dtype=np.int64
    )
    fm = mesh.n_nodes + facet_edge
    facets = np.empty((2 * mesh.facets.shape[0], 2), dtype=np.int64)
    facets[0::2] = np.column_stack([mesh.facets[:, 0], fm])
    facets[1::2] = np.column_stack([fm, mesh.facets[:, 1]])
    tags = np.repeat(mesh.facet_tags, 2)
    return _finalize(nodes, children, facets, tags)
