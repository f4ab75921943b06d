"""Discrete adjoint shape gradient of the fatigue functional.

With the Lagrangian ``L(X, U, Lam) = J(X, U) - Lam^T (B(X) U - F(X))`` the
adjoint state solves ``B^T Lam = dJ/dU`` and the total sensitivity is::

    dJ/dX = dJ/dX|_U - Lam^T (dB/dX U - dF/dX)

All X-derivatives are formed element by element and contracted with the
local slices of ``Lam`` and ``U`` straight away; no third-order tensor is
ever stored. The workhorse identity is ``d D[a,k] / d X[b,l] = -D[a,l] D[b,k]``
for the physical shape gradients ``D``, together with
``d detJ / d X[b,l] = detJ D[b,l]``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .elasticity import (
    FIXED, LinearSystem, LoadCase, Material, centrifugal_density, face_area, scatter_nodal,
    _volume_geometry,
)
from .lcf import surface_terms, pof
from .mesh import Mesh, element_geometry, face_groups, gram_sqrt, volume_rule_data
from .model import Problem, objective, solve
from .parallel import map_chunks

log = logging.getLogger(__name__)


@dataclass
class AdjointState:
    lam: NDArray  # (N*dim,), same layout as U
    residual: float


def dJ_dU(mesh: Mesh, material: Material, U, face_order: int = 6,
          amplitude_factor: float = 1.0) -> NDArray:
    """Partial derivative of the surface functional with respect to U."""
    out = np.zeros(mesh.nodes.shape)
    for t in surface_terms(mesh, material, U, face_order, amplitude_factor, derivatives=True):
        ge = np.einsum("ep,epik,epak->eai", t.weights, t.drho_dH, t.D)
        out += scatter_nodal(mesh, ge, t.group.elements)
    return out.ravel()


def solve_adjoint(system: LinearSystem, rhs: NDArray) -> AdjointState:
    """Solve ``B^T Lam = dJ/dU`` on the constrained space.

    The right-hand side is reduced with the same map as the state: clamped
    rows drop out and cyclic slave entries are rotated back onto their
    masters. Clamped adjoint entries come out as zero.
    """
    r = system.reduce(np.asarray(rhs, dtype=float))
    lam_r = system.solve_transpose_reduced(r)
    ref = np.linalg.norm(r)
    res = float(np.linalg.norm(system.stiffness.T @ lam_r - r) / ref) if ref > 0 else 0.0
    return AdjointState(system.T @ lam_r, res)


def dJ_dX_partial(mesh: Mesh, material: Material, U, face_order: int = 6,
                  amplitude_factor: float = 1.0) -> NDArray:
    """Geometric derivative of J at frozen U, shape (N, dim).

    Differentiates the face area factor and the strain-displacement
    operator at every surface quadrature point.
    """
    out = np.zeros(mesh.nodes.shape)
    for t in surface_terms(mesh, material, U, face_order, amplitude_factor, derivatives=True):
        area = np.einsum("ep,pba,epla->ebl", t.weights * t.rho, t.group.GE, t.TMinv)
        RtH = np.einsum("epik,epil->epkl", t.drho_dH, t.H)
        strain = np.einsum("ep,epbk,epkl->ebl", t.weights, t.D, RtH)
        out += scatter_nodal(mesh, area - strain, t.group.elements)
    return out


def _elastic_stress(H, lam, mu):
    tr = np.trace(H, axis1=-2, axis2=-1)[..., None, None]
    return lam * tr * np.eye(H.shape[-1]) + mu * (H + np.swapaxes(H, -1, -2))


def dBU_contract(mesh: Mesh, material: Material, lam, U, volume_order: int = 2,
                 workers: int | None = None) -> NDArray:
    """``Lam^T (dB/dX) U`` per node, shape (N, dim).

    Per element this is the derivative of ``Lam_e^T K_e(X_e) U_e`` with
    respect to the element's node coordinates::

        sum_p w_p detJ [ b D - D (sigma(U) grad Lam + sigma(Lam) grad U) ]

    with ``b = sigma(U) : grad Lam``. Scratch per element is O(q * dim * P).
    """
    rule, _, G = volume_rule_data(mesh, volume_order)
    Lam = np.asarray(lam, dtype=float).reshape(mesh.nodes.shape)
    Uu = np.asarray(U, dtype=float).reshape(mesh.nodes.shape)
    la, mu = material.lam, material.mu

    def part(sl):
        _, detJ, D = _volume_geometry(mesh, sl, G)
        conn = mesh.elements[sl]
        A = np.einsum("eai,epak->epik", Lam[conn], D)
        H = np.einsum("eai,epak->epik", Uu[conn], D)
        sU = _elastic_stress(H, la, mu)
        sL = _elastic_stress(A, la, mu)
        b = np.einsum("epik,epik->ep", sU, A)
        S = sU @ A + sL @ H
        wd = detJ * rule.weights
        local = np.einsum("ep,epbl->ebl", wd * b, D) - np.einsum("ep,epbk,epkl->ebl", wd, D, S)
        return scatter_nodal(mesh, local, sl)

    out = np.zeros(mesh.nodes.shape)
    for p in map_chunks(part, mesh.n_elements, workers):
        out += p
    return out


def dF_dX_contract(mesh: Mesh, material: Material, loadcase: LoadCase, lam,
                   volume_order: int = 2, face_order: int = 6, workers: int | None = None) -> NDArray:
    """``Lam^T (dF/dX)`` per node, shape (N, dim).

    Follower tractions contribute through the face area factor only. For
    fixed-resultant tractions the density ``R / A(X)`` is readjusted with
    the loaded area, which adds ``-(R . int Lam) / A^2 * dA/dX``. The
    centrifugal term differentiates detJ and the force density evaluated at
    the moving quadrature points.
    """
    Lam = np.asarray(lam, dtype=float).reshape(mesh.nodes.shape)
    out = np.zeros(mesh.nodes.shape)
    for t in loadcase.tractions:
        groups = []
        for grp in face_groups(mesh, t.faces, face_order):
            J, _, _ = element_geometry(mesh.nodes[mesh.elements[grp.elements]], grp.G)
            s, TMinv, _ = gram_sqrt(J, grp.tangents)
            lam_p = np.einsum("pa,eai->epi", grp.N, Lam[mesh.elements[grp.elements]])
            groups.append((grp, s, TMinv, lam_p))
        if t.mode == FIXED and t.resultant is not None:
            R = t.resultant
            A = face_area(mesh, t.faces, face_order)
            RL = sum(float(np.sum(s * grp.weights * (lam_p @ R))) for grp, s, _, lam_p in groups)
            coef = [((lam_p @ R) - RL / A) / A for grp, s, _, lam_p in groups]
        else:
            coef = [lam_p @ t.g for grp, s, _, lam_p in groups]
        for (grp, s, TMinv, _), c in zip(groups, coef):
            local = np.einsum("ep,pba,epla->ebl", c * s * grp.weights, grp.GE, TMinv)
            out += scatter_nodal(mesh, local, grp.elements)

    if loadcase.omega > 0 and material.rho > 0:
        rule, N, G = volume_rule_data(mesh, volume_order)
        d = mesh.dim
        P = np.eye(d) if d == 2 else np.eye(3) - np.outer(loadcase.axis, loadcase.axis)
        k = material.rho * loadcase.omega**2

        def part(sl):
            _, detJ, D = _volume_geometry(mesh, sl, G)
            conn = mesh.elements[sl]
            x = np.einsum("pa,eai->epi", N, mesh.nodes[conn])
            lam_p = np.einsum("pa,eai->epi", N, Lam[conn])
            f = centrifugal_density(x, material, loadcase.omega, loadcase.axis)
            wd = detJ * rule.weights
            vol = np.einsum("ep,epbl->ebl", wd * np.einsum("epi,epi->ep", lam_p, f), D)
            moving = k * np.einsum("ep,pb,epl->ebl", wd, N, lam_p @ P)
            return scatter_nodal(mesh, vol + moving, sl)

        for p in map_chunks(part, mesh.n_elements, workers):
            out += p
    return out


def flank_only_nodes(mesh: Mesh) -> NDArray[np.int64]:
    """Nodes on cyclic flanks that touch no fatigue-surface face."""
    if mesh.cyclic is None:
        return np.zeros(0, dtype=np.int64)
    return np.setdiff1d(mesh.face_node_ids(mesh.cyclic.flank_faces), mesh.surface_nodes())


def cyclic_fold(field_: NDArray, mesh: Mesh, zero_flanks: bool = True) -> NDArray:
    """Fold sector sensitivities across the cyclic identification.

    Each slave vector is rotated back by the sector angle and accumulated on
    its master; the slave then mirrors the folded master, rotated forward.
    Flank-only nodes are virtual surfaces of the sector model; their
    sensitivities are set to zero when ``zero_flanks`` is true.
    """
    g = np.array(field_, dtype=float).reshape(mesh.nodes.shape)
    cyc = mesh.cyclic
    if cyc is None:
        return g
    R = cyc.rotation(mesh.dim)
    m, s = cyc.master_nodes, cyc.slave_nodes
    g[m] += g[s] @ R  # R^T applied to each row vector
    g[s] = g[m] @ R.T
    if zero_flanks:
        g[flank_only_nodes(mesh)] = 0.0
    return g


def total_sensitivity(partial: NDArray, dBU: NDArray, dF: NDArray, mesh: Mesh | None = None,
                      zero_flanks: bool = True) -> NDArray:
    """``dJ/dX|_U - (Lam^T dB/dX U - Lam^T dF/dX)``, cyclically folded if applicable."""
    partial, dBU, dF = (np.asarray(a, dtype=float) for a in (partial, dBU, dF))
    if not (partial.shape == dBU.shape == dF.shape):
        raise ValueError(f"sensitivity parts disagree in shape: {partial.shape}, {dBU.shape}, {dF.shape}")
    total = partial - (dBU - dF)
    if mesh is not None and mesh.cyclic is not None:
        total = cyclic_fold(total, mesh, zero_flanks)
    return total


def pof_sensitivity(J: float, dJ_dX: NDArray, cycles_n: float, material: Material) -> NDArray:
    nm = cycles_n**material.m
    return nm * np.exp(-nm * J) * np.asarray(dJ_dX)


STAGES = ("State U", "dJ/dU, dJ/dX together", "Adjoint State Lambda", "dB/dX, dF/dX together")


@dataclass
class GradientResult:
    J: float
    pof: float
    U: NDArray
    lam: NDArray
    dJ_dX: NDArray
    dPoF_dX: NDArray
    parts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    adjoint_residual: float = 0.0

    @property
    def clamped_nodes(self) -> NDArray:
        """Nodes whose sensitivities are reported but not design variables."""
        return self.parts.get("clamped_nodes", np.zeros(0, dtype=np.int64))


def shape_gradient(problem: Problem, zero_flanks: bool = True) -> GradientResult:
    """Full adjoint pipeline: state, dJ/dU, adjoint, partials, total."""
    m, mat, lc, num = problem.mesh, problem.material, problem.loadcase, problem.numerics
    timings = {}
    t0 = time.perf_counter()
    st = solve(problem)
    timings[STAGES[0]] = time.perf_counter() - t0

    t0 = time.perf_counter()
    J = objective(problem, st.U).J
    rhs = dJ_dU(m, mat, st.U, num.face_order, num.amplitude_factor)
    partial = dJ_dX_partial(m, mat, st.U, num.face_order, num.amplitude_factor)
    timings[STAGES[1]] = time.perf_counter() - t0

    t0 = time.perf_counter()
    adj = solve_adjoint(st.system, rhs)
    timings[STAGES[2]] = time.perf_counter() - t0

    t0 = time.perf_counter()
    dBU = dBU_contract(m, mat, adj.lam, st.U, num.volume_order, num.workers)
    dF = dF_dX_contract(m, mat, lc, adj.lam, num.volume_order, num.face_order, num.workers)
    timings[STAGES[3]] = time.perf_counter() - t0

    total = total_sensitivity(partial, dBU, dF, m, zero_flanks)
    P = pof(J, lc.cycles_n, mat)
    log.info("J=%.6e PoF=%.6e adjoint residual %.2e", J, P, adj.residual)
    return GradientResult(
        J, P, st.U, adj.lam, total, pof_sensitivity(J, total, lc.cycles_n, mat),
        parts={"partial": partial, "dBU": dBU, "dF": dF, "dJ_dU": rhs,
               "clamped_nodes": np.unique(m.dirichlet[:, 0])},
        timings=timings, adjoint_residual=adj.residual,
    )
