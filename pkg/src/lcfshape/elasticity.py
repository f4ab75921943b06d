"""Linear elasticity: assembly, constraints, solution and stresses.

Two-dimensional meshes are treated in plane strain with unit thickness.
Displacements are stored node-major, ``dof = node * dim + component``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from .errors import ConfigError, ConstraintError, GeometryError, NumericError, SingularSystemError
from .mesh import Mesh, element_geometry, face_groups, gram_sqrt, volume_rule_data, _check_positive
from .parallel import map_chunks
from .reference import QuadratureRule, shape_functions

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Material:
    """Elastic, cyclic and fatigue constants (consistent units, e.g. MPa, mm, t)."""

    E: float
    nu: float
    K: float
    n_prime: float
    sigma_f: float
    b: float
    eps_f: float
    c: float
    m: float
    rho: float = 0.0

    def __post_init__(self):
        checks = {
            "E > 0": self.E > 0, "0 < nu < 0.5": 0 < self.nu < 0.5, "K > 0": self.K > 0,
            "n_prime > 0": self.n_prime > 0, "b < 0": self.b < 0, "c < 0": self.c < 0,
            "sigma_f > 0": self.sigma_f > 0, "eps_f > 0": self.eps_f > 0, "m > 0": self.m > 0,
            "rho >= 0": self.rho >= 0,
        }
        failed = [k for k, ok in checks.items() if not ok]
        if failed:
            raise ConfigError("invalid material: " + ", ".join(failed))

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))

    @property
    def mu(self) -> float:
        return self.E / (2 * (1 + self.nu))


FOLLOWER = "follower"
FIXED = "fixed"


@dataclass(frozen=True)
class Traction:
    """Uniform traction on a face set.

    In ``follower`` mode ``g`` is a force density, so the resultant scales
    with the loaded area. In ``fixed`` mode the resultant is held constant:
    ``resultant`` if given, else ``g`` times the area of the mesh the load
    is first bound to (see :meth:`LoadCase.bind`).
    """

    faces: NDArray[np.int64]
    g: NDArray[np.float64]
    mode: str = FOLLOWER
    resultant: NDArray[np.float64] | None = None

    def __post_init__(self):
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))
        if self.mode not in (FOLLOWER, FIXED):
            raise ConfigError(f"traction mode must be 'follower' or 'fixed', got {self.mode!r}")


@dataclass(frozen=True)
class LoadCase:
    tractions: tuple[Traction, ...] = ()
    omega: float = 0.0
    cycles_n: float = 1.0
    axis: NDArray[np.float64] = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        if self.omega < 0:
            raise ConfigError("omega must be >= 0")
        if not self.cycles_n > 0:
            raise ConfigError("cycles_n must be > 0")
        a = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", a / np.linalg.norm(a))
        object.__setattr__(self, "tractions", tuple(self.tractions))

    def bind(self, mesh: Mesh) -> "LoadCase":
        """Freeze fixed-force resultants at the geometry of ``mesh``."""
        out = []
        for t in self.tractions:
            check_faces(mesh, t.faces)
            if t.mode == FIXED and t.resultant is None:
                t = replace(t, resultant=t.g * face_area(mesh, t.faces))
            out.append(t)
        return replace(self, tractions=tuple(out))

    def scaled(self, s: float) -> "LoadCase":
        """Tractions multiplied by ``s`` (centrifugal load unchanged)."""
        return replace(self, tractions=tuple(
            replace(t, g=s * t.g, resultant=None if t.resultant is None else s * t.resultant)
            for t in self.tractions))


@dataclass(frozen=True)
class Numerics:
    volume_order: int = 2
    face_order: int = 6
    amplitude_factor: float = 1.0
    solver_tol: float = 1e-10
    workers: int | None = None


def check_faces(mesh: Mesh, faces) -> None:
    faces = np.asarray(faces).reshape(-1, 2)
    if faces.size and (faces[:, 0].min() < 0 or faces[:, 0].max() >= mesh.n_elements
                       or faces[:, 1].min() < 0 or faces[:, 1].max() >= mesh.element_kind.n_faces):
        raise ConfigError("traction references a nonexistent face")


def face_area(mesh: Mesh, faces, order: int = 6) -> float:
    area = 0.0
    for grp in face_groups(mesh, faces, order):
        J, _, _ = element_geometry(mesh.nodes[mesh.elements[grp.elements]], grp.G)
        s, _, _ = gram_sqrt(J, grp.tangents)
        area += float(np.sum(s * grp.weights))
    return area


def element_dofs(mesh: Mesh, elems=None) -> NDArray[np.int64]:
    conn = mesh.elements if elems is None else mesh.elements[elems]
    d = mesh.dim
    return (conn[:, :, None] * d + np.arange(d)).reshape(len(conn), -1)


def scatter_matrix(mesh: Mesh, Ke: NDArray, elems=None) -> sp.csr_matrix:
    dofs = element_dofs(mesh, elems)
    n = dofs.shape[1]
    rows = np.repeat(dofs, n, axis=1).ravel()
    cols = np.tile(dofs, (1, n)).ravel()
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(mesh.n_dofs,) * 2).tocsr()


def scatter_nodal(mesh: Mesh, values: NDArray, elems) -> NDArray:
    """Sum (E, q, d) element-local node vectors into an (N, d) array."""
    out = np.zeros(mesh.nodes.shape)
    np.add.at(out, mesh.elements[elems], values)
    return out


def _volume_geometry(mesh, sl, G):
    Xe = mesh.nodes[mesh.elements[sl]]
    J, detJ, D = element_geometry(Xe, G)
    _check_positive(detJ, np.arange(mesh.n_elements)[sl])
    return J, detJ, D


def element_stiffness(mesh: Mesh, material: Material, G, weights, sl=slice(None)) -> NDArray:
    """Element matrices K[e, a, i, b, j] for the elements in ``sl``."""
    _, detJ, D = _volume_geometry(mesh, sl, G)
    wd = detJ * weights
    lam, mu = material.lam, material.mu
    DD = np.einsum("ep,epak,epbk->epab", wd, D, D)
    K = lam * np.einsum("ep,epai,epbj->eaibj", wd, D, D)
    K += mu * np.einsum("ep,epaj,epbi->eaibj", wd, D, D)
    d = mesh.dim
    K += mu * np.einsum("eab,ij->eaibj", DD.sum(axis=1), np.eye(d))
    q = D.shape[2]
    return K.reshape(len(K), q * d, q * d)


def assemble_stiffness(mesh: Mesh, material: Material, volume_rule: QuadratureRule | int = 2,
                       workers: int | None = None) -> sp.csr_matrix:
    """Global stiffness B(X) assembled element by element."""
    rule = volume_rule if isinstance(volume_rule, QuadratureRule) else None
    if rule is None:
        rule, _, G = volume_rule_data(mesh, volume_rule)
    else:
        _, G = shape_functions(mesh.kind, rule.points)

    def part(sl):
        return scatter_matrix(mesh, element_stiffness(mesh, material, G, rule.weights, sl), sl)

    parts = map_chunks(part, mesh.n_elements, workers)
    B = parts[0]
    for p in parts[1:]:
        B = B + p
    return B.tocsr()


def centrifugal_density(x: NDArray, material: Material, omega: float, axis) -> NDArray:
    """Volume force rho * omega^2 * x_perp (axis through the origin)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 2:
        perp = x
    else:
        a = np.asarray(axis, dtype=float)
        perp = x - (x @ a)[..., None] * a
    return material.rho * omega**2 * perp


def _traction_group_density(mesh, t: Traction, order):
    """Effective density of a traction at the current geometry."""
    if t.mode == FOLLOWER or t.resultant is None:
        return t.g
    return t.resultant / face_area(mesh, t.faces, order)


def assemble_loads(mesh: Mesh, material: Material, loadcase: LoadCase, volume_order: int = 2,
                   face_order: int = 6, workers: int | None = None) -> NDArray:
    """Consistent load vector F(X) as an (N*dim,) array."""
    F = np.zeros(mesh.nodes.shape)
    for t in loadcase.tractions:
        check_faces(mesh, t.faces)
        g = _traction_group_density(mesh, t, face_order)
        if g.shape != (mesh.dim,):
            raise ConfigError(f"traction vector needs {mesh.dim} components")
        for grp in face_groups(mesh, t.faces, face_order):
            J, _, _ = element_geometry(mesh.nodes[mesh.elements[grp.elements]], grp.G)
            s, _, _ = gram_sqrt(J, grp.tangents)
            Fe = np.einsum("ep,p,pa,i->eai", s, grp.weights, grp.N, g)
            F += scatter_nodal(mesh, Fe, grp.elements)
    if loadcase.omega > 0 and material.rho > 0:
        rule, N, G = volume_rule_data(mesh, volume_order)

        def part(sl):
            _, detJ, _ = _volume_geometry(mesh, sl, G)
            x = np.einsum("pa,eai->epi", N, mesh.nodes[mesh.elements[sl]])
            f = centrifugal_density(x, material, loadcase.omega, loadcase.axis)
            return scatter_nodal(mesh, np.einsum("ep,p,pa,epi->eai", detJ, rule.weights, N, f), sl)

        for p in map_chunks(part, mesh.n_elements, workers):
            F += p
    return F.ravel()


@dataclass
class LinearSystem:
    """Constraint-reduced system ``T^T B T u = T^T (F - B u_p)``.

    ``T`` maps free DoF to global DoF: clamped rows are zero and cyclic slave
    rows hold the sector rotation applied to the master's columns.
    """

    stiffness: sp.csc_matrix
    rhs: NDArray
    T: sp.csr_matrix
    prescribed: NDArray
    _lu: object = None

    @property
    def n_free(self) -> int:
        return self.T.shape[1]

    def factorize(self):
        if self._lu is None:
            if self.n_free == 0:
                raise SingularSystemError("no free degrees of freedom")
            try:
                lu = spla.splu(self.stiffness, permc_spec="MMD_AT_PLUS_A",
                               diag_pivot_thresh=0.0, options={"SymmetricMode": True})
            except RuntimeError as exc:
                raise SingularSystemError(f"factorization failed: {exc}") from None
            piv = np.abs(lu.U.diagonal())
            scale = np.abs(self.stiffness.diagonal()).max()
            if not np.all(np.isfinite(piv)) or piv.min() <= 1e-12 * scale:
                raise SingularSystemError(
                    "stiffness is singular (rigid-body modes not suppressed by constraints)")
            self._lu = lu
        return self._lu

    def solve_reduced(self, rhs: NDArray) -> NDArray:
        return self.factorize().solve(np.asarray(rhs, dtype=float))

    def solve_transpose_reduced(self, rhs: NDArray) -> NDArray:
        return self.factorize().solve(np.asarray(rhs, dtype=float), trans="T")

    def expand(self, u: NDArray) -> NDArray:
        return self.T @ u + self.prescribed

    def reduce(self, v: NDArray) -> NDArray:
        return self.T.T @ v


def constraint_map(mesh: Mesh) -> sp.csr_matrix:
    """Sparse (N*dim, n_free) map from free DoF to global DoF."""
    d = mesh.dim
    n = mesh.n_dofs
    clamped = mesh.dirichlet_mask().ravel()
    slave = np.zeros(mesh.n_nodes, dtype=bool)
    cyc = mesh.cyclic
    if cyc is not None:
        slave[cyc.slave_nodes] = True
    free = ~clamped & ~np.repeat(slave, d)
    col = -np.ones(n, dtype=np.int64)
    col[free] = np.arange(free.sum())
    idx = np.flatnonzero(free)
    T = sp.csr_matrix((np.ones(idx.size), (idx, col[idx])), shape=(n, int(free.sum())))
    if cyc is not None and len(cyc.slave_nodes):
        if np.any(slave[cyc.master_nodes]):
            raise ConstraintError("cyclic master node is itself a slave")
        R = cyc.rotation(d)
        mrows = (cyc.master_nodes[:, None] * d + np.arange(d)).ravel()
        Tm = T[mrows]  # (nm*d, nfree)
        Rb = sp.kron(sp.eye(len(cyc.master_nodes)), sp.csr_matrix(R))
        srows = (cyc.slave_nodes[:, None] * d + np.arange(d)).ravel()
        P = sp.csr_matrix((np.ones(srows.size), (srows, np.arange(srows.size))), shape=(n, srows.size))
        T = (T + P @ (Rb @ Tm)).tocsr()
    T.eliminate_zeros()
    return T


def apply_constraints(B: sp.spmatrix, F: NDArray, mesh: Mesh, prescribed: NDArray | None = None
                      ) -> LinearSystem:
    """Symmetric elimination of clamped and cyclic-slave DoF.

    ``prescribed`` (optional, (N, dim) or flat) gives values for clamped DoF;
    the mesh-file workflow only uses zero clamps.
    """
    T = constraint_map(mesh)
    up = np.zeros(mesh.n_dofs)
    if prescribed is not None:
        up = np.asarray(prescribed, dtype=float).ravel().copy()
        up[~mesh.dirichlet_mask().ravel()] = 0.0
    K = (T.T @ B @ T).tocsc()
    rhs = T.T @ (np.asarray(F, dtype=float) - B @ up)
    return LinearSystem(K, rhs, T, up)


def solve_state(system: LinearSystem, tol: float = 1e-10) -> NDArray:
    """Displacements over all global DoF, shape (N*dim,)."""
    u = system.solve_reduced(system.rhs)
    res = np.linalg.norm(system.stiffness @ u - system.rhs)
    ref = np.linalg.norm(system.rhs)
    if ref > 0 and res > tol * ref:
        raise NumericError(f"state residual {res / ref:.2e} exceeds tolerance {tol:.1e}")
    return system.expand(u)


# ---------------------------------------------------------------------------
# stresses


def embed3(H: NDArray) -> NDArray:
    """Pad (..., 2, 2) gradients to (..., 3, 3) for plane strain."""
    if H.shape[-1] == 3:
        return H
    out = np.zeros(H.shape[:-2] + (3, 3))
    out[..., :2, :2] = H
    return out


def stress_from_gradient(H: NDArray, material: Material) -> NDArray:
    """Cauchy stress (..., 3, 3) from displacement gradient (..., d, d)."""
    H3 = embed3(H)
    tr = np.trace(H3, axis1=-2, axis2=-1)
    return material.lam * tr[..., None, None] * np.eye(3) + material.mu * (H3 + np.swapaxes(H3, -1, -2))


def von_mises(sigma: NDArray) -> tuple[NDArray, NDArray]:
    """Equivalent stress and the deviator of a (..., 3, 3) stress."""
    s = sigma - np.trace(sigma, axis1=-2, axis2=-1)[..., None, None] / 3.0 * np.eye(3)
    return np.sqrt(1.5 * np.einsum("...ij,...ij->...", s, s)), s


def displacement_gradient(mesh: Mesh, U: NDArray, elems, D: NDArray) -> NDArray:
    Ue = np.asarray(U, dtype=float).reshape(mesh.nodes.shape)[mesh.elements[elems]]
    return np.einsum("eai,epak->epik", Ue, D)


def stress(mesh: Mesh, material: Material, U: NDArray, element: int, xi) -> tuple[NDArray, float]:
    """Stress tensor (3x3, plane strain in 2D) and von Mises stress at ``xi``."""
    _, G = shape_functions(mesh.kind, np.atleast_2d(xi))
    J, detJ, D = element_geometry(mesh.nodes[mesh.elements[[element]]], G)
    _check_positive(detJ, [element])
    H = displacement_gradient(mesh, U, [element], D)
    sig = stress_from_gradient(H, material)[0, 0]
    vm, _ = von_mises(sig)
    return sig, float(vm)


def nodal_von_mises(mesh: Mesh, material: Material, U: NDArray) -> NDArray:
    """Element-averaged von Mises stress at the nodes (for output)."""
    ek = mesh.element_kind
    _, G = shape_functions(ek, ek.node_coords)
    _, _, D = element_geometry(mesh.nodes[mesh.elements], G)
    vm, _ = von_mises(stress_from_gradient(displacement_gradient(mesh, U, slice(None), D), material))
    acc = np.zeros(mesh.n_nodes)
    cnt = np.zeros(mesh.n_nodes)
    np.add.at(acc, mesh.elements, vm)
    np.add.at(cnt, mesh.elements, 1.0)
    return acc / np.maximum(cnt, 1)
