"""A mesh together with its material, loads and numerical settings."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .elasticity import (
    LinearSystem, LoadCase, Material, Numerics, apply_constraints, assemble_loads,
    assemble_stiffness, solve_state,
)
from .lcf import Objective, objective_J, pof
from .mesh import Mesh


@dataclass(frozen=True)
class Problem:
    mesh: Mesh
    material: Material
    loadcase: LoadCase
    numerics: Numerics = field(default_factory=Numerics)

    def with_nodes(self, nodes, validate: bool = True) -> "Problem":
        return replace(self, mesh=self.mesh.with_nodes(nodes, validate))

    def bound(self) -> "Problem":
        """Problem whose fixed-force resultants are frozen at the current shape."""
        return replace(self, loadcase=self.loadcase.bind(self.mesh))


@dataclass
class State:
    U: NDArray  # (N*dim,)
    B: sp.csr_matrix
    F: NDArray
    system: LinearSystem


def solve(problem: Problem) -> State:
    m, num = problem.mesh, problem.numerics
    B = assemble_stiffness(m, problem.material, num.volume_order, num.workers)
    F = assemble_loads(m, problem.material, problem.loadcase, num.volume_order, num.face_order,
                       num.workers)
    system = apply_constraints(B, F, m)
    U = solve_state(system, num.solver_tol)
    return State(U, B, F, system)


def objective(problem: Problem, U) -> Objective:
    num = problem.numerics
    return objective_J(problem.mesh, problem.material, U, num.face_order, num.amplitude_factor)


def evaluate(problem: Problem) -> tuple[float, float]:
    """(J, PoF) after a fresh state solve."""
    st = solve(problem)
    J = objective(problem, st.U).J
    return J, pof(J, problem.loadcase.cycles_n, problem.material)

