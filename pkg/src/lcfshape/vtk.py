"""Legacy ASCII VTK unstructured-grid writer."""

from __future__ import annotations

import io

import numpy as np

from .mesh import Mesh


def format_vtk(mesh: Mesh, point_data: dict | None = None, title: str = "lcfshape",
               fill: float = -1.0) -> str:
    """Unstructured grid with optional point data.

    ``point_data`` maps names to arrays of shape ``(N,)`` (scalars) or
    ``(N, dim)`` (vectors, padded to three components). Non-finite values
    are written as ``fill`` since legacy readers reject ``nan``/``inf``.
    Element node order already matches VTK for all supported kinds.
    """
    n, dim = mesh.nodes.shape
    out = io.StringIO()
    out.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    pts = np.zeros((n, 3))
    pts[:, :dim] = mesh.nodes
    out.write(f"POINTS {n} double\n")
    for p in pts:
        out.write(" ".join(repr(float(v)) for v in p) + "\n")
    ne, q = mesh.elements.shape
    out.write(f"CELLS {ne} {ne * (q + 1)}\n")
    for conn in mesh.elements:
        out.write(f"{q} " + " ".join(str(int(v)) for v in conn) + "\n")
    out.write(f"CELL_TYPES {ne}\n")
    out.write(f"{mesh.element_kind.vtk_type}\n" * ne)
    if point_data:
        out.write(f"POINT_DATA {n}\n")
        for name, values in point_data.items():
            a = np.asarray(values, dtype=float)
            a = np.where(np.isfinite(a), a, fill)
            if a.ndim == 1 or (a.ndim == 2 and a.shape[1] == 1):
                out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                out.write("\n".join(repr(float(v)) for v in a.ravel()) + "\n")
            else:
                a = a.reshape(n, -1)
                v3 = np.zeros((n, 3))
                v3[:, : a.shape[1]] = a
                out.write(f"VECTORS {name} double\n")
                for v in v3:
                    out.write(" ".join(repr(float(x)) for x in v) + "\n")
    return out.getvalue()


def write_vtk(path, mesh: Mesh, point_data: dict | None = None, title: str = "lcfshape",
              fill: float = -1.0) -> None:
    with open(path, "w") as fh:
        fh.write(format_vtk(mesh, point_data, title, fill))
