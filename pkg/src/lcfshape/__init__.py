"""Adjoint shape sensitivities of probabilistic low-cycle-fatigue failure."""

from .elasticity import LoadCase, Material, Numerics, Traction
from .mesh import CyclicSpec, Mesh, parse_mesh, read_mesh, write_mesh
from .model import Problem

__all__ = [
    "CyclicSpec", "LoadCase", "Material", "Mesh", "Numerics", "Problem", "Traction",
    "parse_mesh", "read_mesh", "write_mesh",
]
__version__ = "0.1.0"
