"""Biobjective shape descent: failure probability against volume.

The design variables are the coordinates of the free surface nodes. Every
other unclamped node follows through a fixed linear extension (a few
Jacobi smoothing sweeps over the node graph), so objective gradients in
design space are ``E^T g`` for full-mesh gradients ``g``. Each iteration
takes the multi-objective steepest-descent direction, the negative of
the minimal-norm element of the convex hull of the scaled gradients, and
a backtracking step that decreases every objective.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.optimize import minimize

from .adjoint import flank_only_nodes, shape_gradient
from .errors import GeometryError, LCFShapeError
from .mesh import Mesh, element_geometry, volume_rule_data
from .model import Problem, evaluate

log = logging.getLogger(__name__)


def volume_with_gradient(mesh: Mesh, order: int = 3) -> tuple[float, NDArray]:
    """Volume (area in 2D) and its node-coordinate gradient.

    Uses ``d detJ / d X[b,l] = detJ D[b,l]``. The default order integrates
    ``detJ`` exactly for every supported element.
    """
    rule, _, G = volume_rule_data(mesh, order)
    w = rule.weights
    Xe = mesh.nodes[mesh.elements]
    _, detJ, D = element_geometry(Xe, G)
    V = float(np.einsum("p,ep->", w, detJ))
    ge = np.einsum("p,ep,epbl->ebl", w, detJ, D)
    grad = np.zeros(mesh.nodes.shape)
    np.add.at(grad, mesh.elements, ge)
    return V, grad


def min_norm_weights(gradients) -> NDArray:
    """Simplex weights of the minimal-norm convex combination of ``gradients``."""
    gs = [np.ravel(g) for g in gradients]
    k = len(gs)
    if k == 1:
        return np.ones(1)
    if k == 2:
        diff = gs[0] - gs[1]
        nn = diff @ diff
        a = 0.5 if nn == 0 else float(np.clip(-(diff @ gs[1]) / nn, 0.0, 1.0))
        return np.array([a, 1.0 - a])
    A = np.array(gs)
    Q = A @ A.T
    res = minimize(lambda a: a @ Q @ a, np.full(k, 1.0 / k), jac=lambda a: 2 * Q @ a,
                   bounds=[(0, 1)] * k, constraints=({"type": "eq", "fun": lambda a: a.sum() - 1},),
                   method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
    a = np.clip(res.x, 0, None)
    return a / a.sum()


def descent_direction(gradients) -> tuple[NDArray, float]:
    """``d = -sum(a_i g_i)`` and ``theta = max_i <g_i, d> + |d|^2 / 2``.

    ``theta <= 0`` always, with equality exactly at Pareto-critical points.
    """
    a = min_norm_weights(gradients)
    shape = np.shape(gradients[0])
    d = -sum(ai * np.asarray(g, dtype=float) for ai, g in zip(a, gradients))
    theta = max(float(np.vdot(g, d)) for g in gradients) + 0.5 * float(np.vdot(d, d))
    return np.reshape(d, shape), min(theta, 0.0)


@dataclass(frozen=True)
class DescentConfig:
    max_iter: int = 30
    step0: float = 0.1  # first trial step length, in mesh diameters
    beta: float = 0.5
    c1: float = 1e-4
    t_min: float = 1e-12  # in mesh diameters
    theta_tol: float = 1e-8  # relative to the initial |d|^2
    smoothing_sweeps: int = 5
    scaling: str = "start"  # or "raw"
    workers: int = 1


def free_nodes(mesh: Mesh) -> NDArray[np.int64]:
    """Surface nodes that are neither clamped nor on cyclic flanks."""
    nodes = mesh.surface_nodes()
    blocked = np.zeros(mesh.n_nodes, dtype=bool)
    blocked[mesh.dirichlet[:, 0]] = True
    if mesh.cyclic is not None:
        blocked[mesh.face_node_ids(mesh.cyclic.flank_faces)] = True
        blocked[flank_only_nodes(mesh)] = True
    return nodes[~blocked[nodes]]


def extension_operator(mesh: Mesh, free: NDArray, sweeps: int = 5) -> sp.csr_matrix:
    """Linear map from free-node displacements to all-node displacements.

    Free nodes move as given, clamped and flank nodes stay put, and every other node
    takes ``sweeps`` Jacobi averages over its element neighbours, starting
    from rest. The same map acts on each coordinate.
    """
    n = mesh.n_nodes
    q = mesh.elements.shape[1]
    rows = np.repeat(mesh.elements, q, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, q)).ravel()
    A = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    A.data[:] = 1.0
    A.setdiag(0)
    A.eliminate_zeros()
    deg = np.asarray(A.sum(axis=1)).ravel()
    W = sp.diags(1.0 / np.maximum(deg, 1)) @ A
    fixed = np.zeros(n, dtype=bool)
    fixed[free] = True
    fixed[mesh.dirichlet[:, 0]] = True
    if mesh.cyclic is not None:
        fixed[mesh.face_node_ids(mesh.cyclic.flank_faces)] = True
    follow = sp.diags((~fixed).astype(float))
    P = sp.csr_matrix((np.ones(free.size), (free, np.arange(free.size))), shape=(n, free.size))
    E = P
    for _ in range(sweeps):
        E = P + follow @ (W @ E)
    return sp.csr_matrix(E)


@dataclass
class Iterate:
    volume: float
    pof: float
    theta: float
    step: float


@dataclass
class ParetoPoint:
    start_id: int
    volume: float
    pof: float
    iterations: int
    converged: bool
    nodes: NDArray = field(repr=False)
    history: list = field(default_factory=list, repr=False)


class _Objectives:
    """PoF and volume of a problem, their design-space gradients and scales."""

    def __init__(self, problem: Problem, cfg: DescentConfig):
        self.base = problem
        self.free = free_nodes(problem.mesh)
        self.E = extension_operator(problem.mesh, self.free, cfg.smoothing_sweeps)
        self.cfg = cfg
        self.scale = np.ones(2)

    def mesh_at(self, nodes) -> Mesh:
        return self.base.mesh.with_nodes(nodes)

    def values(self, nodes) -> NDArray:
        p = self.base.with_nodes(nodes)
        _, P = evaluate(p)
        V, _ = volume_with_gradient(p.mesh)
        return np.array([P, V])

    def values_and_gradients(self, nodes):
        p = self.base.with_nodes(nodes)
        r = shape_gradient(p)
        V, dV = volume_with_gradient(p.mesh)
        grads = [self.E.T @ g for g in (r.dPoF_dX, dV)]
        return np.array([r.pof, V]), grads

    def set_scale(self, f0):
        if self.cfg.scaling == "start":
            self.scale = np.where(f0 > 0, f0, 1.0)

    def move(self, nodes, d, t):
        return nodes + t * (self.E @ d)


def descend(problem: Problem, cfg: DescentConfig = DescentConfig(), start_id: int = 0,
            snapshot=None) -> ParetoPoint:
    """Multi-objective steepest descent from the shape of ``problem``.

    ``snapshot(start_id, iteration, mesh)`` is called for every accepted
    iterate, including the start.
    """
    obj = _Objectives(problem, cfg)
    X = problem.mesh.nodes.copy()
    diam = problem.mesh.diameter
    f, grads = obj.values_and_gradients(X)
    obj.set_scale(f)
    history = []
    d0_sq = None
    converged = False
    it = 0
    if snapshot is not None:
        snapshot(start_id, 0, problem.mesh)
    while it < cfg.max_iter:
        fs = f / obj.scale
        gs = [g / s for g, s in zip(grads, obj.scale)]
        d, theta = descent_direction(gs)
        dd = float(np.vdot(d, d))
        if d0_sq is None:
            d0_sq = dd
        history.append(Iterate(f[1], f[0], theta, 0.0))
        if d0_sq == 0 or theta >= -cfg.theta_tol * d0_sq:
            converged = True
            break
        slope = max(float(np.vdot(g, d)) for g in gs)
        full_norm = float(np.linalg.norm(obj.E @ d))
        t = cfg.step0 * diam / full_norm
        accepted = False
        while t * full_norm >= cfg.t_min * diam:
            try:
                Xn = obj.move(X, d, t)
                obj.mesh_at(Xn)  # feasibility guard before any solve
                fn = obj.values(Xn)
            except GeometryError:
                t *= cfg.beta
                continue
            if np.all(fn / obj.scale <= fs + cfg.c1 * t * slope):
                accepted = True
                break
            t *= cfg.beta
        if not accepted:
            log.info("start %d: no acceptable step at iteration %d, stopping", start_id, it)
            converged = True
            break
        X = Xn
        it += 1
        f, grads = obj.values_and_gradients(X)
        history[-1].step = t
        if snapshot is not None:
            snapshot(start_id, it, obj.mesh_at(X))
        log.debug("start %d it %d: PoF %.6e V %.6e theta %.3e t %.3e", start_id, it, f[0], f[1], theta, t)
    if it >= cfg.max_iter and not converged:
        history.append(Iterate(f[1], f[0], float("nan"), 0.0))
    return ParetoPoint(start_id, float(f[1]), float(f[0]), it, converged, X, history)


def nondominated(points: list[ParetoPoint]) -> list[ParetoPoint]:
    """Mutually nondominated points in (volume, PoF), sorted by volume.

    Exact duplicates keep the first occurrence.
    """
    keep = []
    for i, p in enumerate(points):
        dominated = False
        for j, q in enumerate(points):
            if i == j:
                continue
            le = q.volume <= p.volume and q.pof <= p.pof
            lt = q.volume < p.volume or q.pof < p.pof
            same = q.volume == p.volume and q.pof == p.pof
            if (le and lt) or (same and j < i):
                dominated = True
                break
        if not dominated:
            keep.append(p)
    return sorted(keep, key=lambda p: (p.volume, -p.pof))


def pareto_sweep(starts: list[Problem], cfg: DescentConfig = DescentConfig(),
                 snapshot=None) -> tuple[list[ParetoPoint], list[ParetoPoint]]:
    """Descend from every start; returns (all end points, filtered front)."""

    def run(k):
        try:
            return descend(starts[k], cfg, k, snapshot)
        except LCFShapeError as exc:
            log.warning("start %d failed: %s", k, exc)
            return None

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(run, range(len(starts))))
    else:
        results = [run(k) for k in range(len(starts))]
    points = [r for r in results if r is not None]
    return points, nondominated(points)


def format_front(points: list[ParetoPoint]) -> str:
    lines = ["start_id volume pof iterations converged"]
    lines += [f"{p.start_id} {p.volume:.17g} {p.pof:.17g} {p.iterations} {int(p.converged)}"
              for p in points]
    return "\n".join(lines) + "\n"


def format_trace(point: ParetoPoint) -> str:
    lines = ["iteration volume pof theta step"]
    lines += [f"{k} {h.volume:.17g} {h.pof:.17g} {h.theta:.17g} {h.step:.17g}"
              for k, h in enumerate(point.history)]
    return "\n".join(lines) + "\n"
