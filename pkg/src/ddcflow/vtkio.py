"""Legacy ASCII VTK output for meshes and nodal fields.

Floats are written with 17 significant digits so files round-trip
exactly and repeated runs are byte-identical.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh

__all__ = ["write_vtk_mesh", "write_vtk_solution"]


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _header(lines, mesh: Mesh, title: str):
    lines.append("# vtk DataFile Version 3.0")
    lines.append(title)
    lines.append("ASCII")
    lines.append("DATASET UNSTRUCTURED_GRID")
    lines.append(f"POINTS {mesh.n_nodes} double")
    for x, y in mesh.nodes:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines.extend(["5"] * mesh.n_triangles)


def write_vtk_mesh(path, mesh: Mesh, title: str = "mesh") -> None:
    lines: list[str] = []
    _header(lines, mesh, title)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def write_vtk_solution(
    path, mesh: Mesh, velocity: np.ndarray, pressure: np.ndarray, title: str = "solution"
) -> None:
    """Write nodal velocity vectors and pressure scalars.

    ``velocity`` is (n_nodes, 2), ``pressure`` (n_nodes,); quadratic
    velocity fields are sampled at the mesh vertices.
    """
    if velocity.shape != (mesh.n_nodes, 2) or pressure.shape != (mesh.n_nodes,):
        raise ValueError("field shapes do not match the mesh nodes")
    lines: list[str] = []
    _header(lines, mesh, title)
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    lines.append("VECTORS velocity double")
    for vx, vy in velocity:
        lines.append(f"{_fmt(vx)} {_fmt(vy)} 0")
    lines.append("SCALARS pressure double 1")
    lines.append("LOOKUP_TABLE default")
    for p in pressure:
        lines.append(_fmt(p))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
