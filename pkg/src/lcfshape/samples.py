"""Parametric test geometries: cube, bars, bent rods and cyclic wheels.

These are structured meshes over a smooth map of the unit cube (or square).
They stand in for the production geometries, which are not available; each
builder returns a :class:`Sample` carrying the mesh, a load case and named
face and node sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elasticity import FIXED, FOLLOWER, LoadCase, Material, Numerics, Traction
from .mesh import CyclicSpec, Mesh, rotation_matrix
from .model import Problem
from .reference import element_kind

# Steel-like cyclic and fatigue data (MPa, mm, t/mm^3)
STEEL = Material(E=200000.0, nu=0.3, K=1100.0, n_prime=0.12, sigma_f=900.0, b=-0.087,
                 eps_f=0.6, c=-0.58, m=4.0, rho=7.85e-9)


@dataclass
class Grid:
    nodes: np.ndarray
    elements: np.ndarray
    kind: str
    faces: dict  # side name -> (K, 2) faces
    node_sets: dict  # side name -> node ids
    params: np.ndarray  # (N, dim) unit-cube parameters of each node


@dataclass
class Sample:
    mesh: Mesh
    loadcase: LoadCase
    faces: dict = field(default_factory=dict)
    node_sets: dict = field(default_factory=dict)
    material: Material = STEEL

    def problem(self, numerics: Numerics | None = None) -> Problem:
        return Problem(self.mesh, self.material, self.loadcase, numerics or Numerics()).bound()


_SIDES_3D = {  # side -> (axis, at_max, local face)
    "xmin": (0, False, 5), "xmax": (0, True, 3),
    "ymin": (1, False, 2), "ymax": (1, True, 4),
    "zmin": (2, False, 0), "zmax": (2, True, 1),
}
_SIDES_2D = {"xmin": (0, False, 3), "xmax": (0, True, 1), "ymin": (1, False, 0), "ymax": (1, True, 2)}


def structured_grid(shape, kind: str, mapping=None) -> Grid:
    """Structured mesh of ``prod(shape)`` elements over ``mapping([0,1]^dim)``."""
    ek = element_kind(kind)
    dim = ek.dim
    shape = tuple(int(s) for s in shape)
    if len(shape) != dim:
        raise ValueError(f"{kind} needs {dim} cell counts")
    quadratic = ek.n_nodes > ek.corner_count
    fine = tuple(2 * s + 1 for s in shape)
    idx = np.stack(np.meshgrid(*[np.arange(f) for f in fine], indexing="ij"), axis=-1).reshape(-1, dim)
    odd = (idx % 2).sum(axis=1)
    keep = odd <= (1 if quadratic else 0)
    node_of = -np.ones(len(idx), dtype=np.int64)
    node_of[keep] = np.arange(keep.sum())
    params = idx[keep] / (np.array(fine) - 1)
    flat = lambda ijk: np.ravel_multi_index(tuple(np.moveaxis(ijk, -1, 0)), fine)

    cells = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), axis=-1).reshape(-1, dim)
    offsets = (ek.node_coords + 1).astype(np.int64)
    conn = node_of[flat(2 * cells[:, None, :] + offsets[None, :, :])]
    assert (conn >= 0).all()

    sides = _SIDES_3D if dim == 3 else _SIDES_2D
    faces, node_sets = {}, {}
    for name, (axis, at_max, f) in sides.items():
        target = shape[axis] - 1 if at_max else 0
        el = np.flatnonzero(cells[:, axis] == target)
        faces[name] = np.column_stack([el, np.full(el.size, f)])
        node_sets[name] = np.flatnonzero(np.isclose(params[:, axis], 1.0 if at_max else 0.0))
    x = params.copy() if mapping is None else np.asarray(mapping(params), dtype=float)
    return Grid(x, conn, ek.name, faces, node_sets, params)


def _cat(*arrs):
    return np.vstack([a.reshape(-1, 2) for a in arrs])


def unit_cube(kind: str = "hex8", scale: float = 1.0) -> Mesh:
    g = structured_grid((1, 1, 1), kind, lambda p: scale * p)
    return Mesh(g.nodes, g.elements, kind, _cat(*g.faces.values()))


def bar(length=20.0, width=1.0, cells=(20, 1, 1), kind="hex8", g=10.0, clamp="full",
        mode=FOLLOWER) -> Sample:
    """Straight bar along x, clamped at x=0 and pulled by ``g`` at x=length.

    ``clamp="full"`` fixes all components at x=0; ``clamp="roller"`` fixes
    only u_x there, plus the minimum needed against rigid motion, so the
    bar is in exact uniaxial tension.
    """
    dim = element_kind(kind).dim
    size = np.array([length, width, width][:dim])
    grid = structured_grid(cells, kind, lambda p: p * size)
    left = grid.node_sets["xmin"]
    if clamp == "full":
        dirichlet = [(n, c) for n in left for c in range(dim)]
    else:
        dirichlet = [(n, 0) for n in left]
        origin = left[np.argmin(np.linalg.norm(grid.nodes[left], axis=1))]
        dirichlet += [(origin, c) for c in range(1, dim)]
        if dim == 3:
            ny = left[np.argmin(np.linalg.norm(grid.nodes[left] - [0, width, 0], axis=1))]
            dirichlet.append((ny, 2))
    lateral = [k for k in grid.faces if k[0] in "yz"]
    mesh = Mesh(grid.nodes, grid.elements, kind, _cat(*[grid.faces[k] for k in lateral]),
                np.array(dirichlet))
    gvec = np.zeros(dim)
    gvec[0] = g
    lc = LoadCase((Traction(grid.faces["xmax"], gvec, mode),), cycles_n=1e4)
    return Sample(mesh, lc, grid.faces, grid.node_sets)


def _rod_map(length, width, height, rise, dim):
    def mapping(p):
        s = p[:, 0] * length
        zc = rise * np.sin(np.pi * s / length)
        dz = rise * np.pi / length * np.cos(np.pi * s / length)
        nrm = np.hypot(1.0, dz)
        # unit normal in the bending plane, pointing up
        nx, nz = -dz / nrm, 1.0 / nrm
        h = (p[:, dim - 1] - 0.5) * height
        out = np.empty((len(p), dim))
        out[:, 0] = s + h * nx
        out[:, dim - 1] = zc + h * nz
        if dim == 3:
            out[:, 1] = (p[:, 1] - 0.5) * width
        return out
    return mapping


def bent_rod(cells=(10, 2, 2), kind="hex20", length=40.0, width=4.0, height=4.0, rise=4.0,
             g=60.0, mode=FOLLOWER, cycles_n=1e4) -> Sample:
    """Rod arched upwards, clamped at its rear face and pulled along +x at the front.

    The pull tends to straighten the arch, so the peak stress sits at the
    bottom of the mid-span. Lateral faces form the fatigue surface.
    """
    dim = element_kind(kind).dim
    grid = structured_grid(cells, kind, _rod_map(length, width, height, rise, dim))
    lateral = [k for k in grid.faces if k[0] in ("yz" if dim == 3 else "y")]
    dirichlet = [(n, c) for n in grid.node_sets["xmin"] for c in range(dim)]
    mesh = Mesh(grid.nodes, grid.elements, kind, _cat(*[grid.faces[k] for k in lateral]),
                np.array(dirichlet))
    gvec = np.zeros(dim)
    gvec[0] = g
    lc = LoadCase((Traction(grid.faces["xmax"], gvec, mode),), cycles_n=cycles_n)
    return Sample(mesh, lc, grid.faces, grid.node_sets)


def rod2d(cells=(16, 3), kind="quad8", length=40.0, height=4.0, rise=4.0, g=60.0,
          mode=FIXED, cycles_n=1e4) -> Sample:
    """Plane-strain counterpart of :func:`bent_rod` (x-y plane, arch along +y)."""
    return bent_rod(cells, kind, length, 1.0, height, rise, g, mode, cycles_n)


def _wheel_map(r_in, r_out, thickness, angle, lobe, tilt):
    def mapping(p):
        u, v, w = p[:, 0], p[:, 1], p[:, 2]
        theta = v * angle
        ro = r_out + lobe * np.sin(np.pi * v) ** 2
        r = r_in + u * (ro - r_in)
        t = thickness * (1.0 - 0.4 * u)
        z = (w - 0.5) * t + tilt * u**2 * np.sin(2 * np.pi * v)
        return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])
    return mapping


def wheel_sector(n_sectors=4, cells=(4, 6, 2), kind="hex8", r_in=20.0, r_out=60.0,
                 thickness=12.0, lobe=8.0, tilt=3.0, omega=6000.0, cycles_n=1e4) -> Sample:
    """One sector of a lobed, tilted disk spinning about z, clamped at the bore.

    Flank nodes at theta=0 are masters; their images at theta=2*pi/n are
    slaves. The rim and both end faces form the fatigue surface.
    """
    angle = 2 * np.pi / n_sectors
    grid = structured_grid(cells, kind, _wheel_map(r_in, r_out, thickness, angle, lobe, tilt))
    masters = grid.node_sets["ymin"]
    p = grid.params
    key = lambda ids: np.lexsort((p[ids, 2], p[ids, 0]))
    masters = masters[key(masters)]
    slaves = grid.node_sets["ymax"]
    slaves = slaves[key(slaves)]
    flanks = _cat(grid.faces["ymin"], grid.faces["ymax"])
    cyc = CyclicSpec(n_sectors, np.array([0.0, 0.0, 1.0]), masters, slaves, flanks)
    surface = _cat(grid.faces["xmax"], grid.faces["zmin"], grid.faces["zmax"])
    dirichlet = [(n, c) for n in grid.node_sets["xmin"] for c in range(3)]
    mesh = Mesh(grid.nodes, grid.elements, kind, surface, np.array(dirichlet), cyc)
    lc = LoadCase((), omega=omega, cycles_n=cycles_n, axis=np.array([0.0, 0.0, 1.0]))
    return Sample(mesh, lc, grid.faces, grid.node_sets)


def full_wheel(sector: Sample) -> tuple[Sample, np.ndarray]:
    """Assemble all sectors of a cyclic sample into one non-cyclic model.

    Returns the full-wheel sample and, for every sector node, the index of
    the coincident node of the full model (sector copy 0).
    """
    sm = sector.mesh
    cyc = sm.cyclic
    n, N = cyc.sector_count, sm.n_nodes
    is_slave = np.zeros(N, dtype=bool)
    is_slave[cyc.slave_nodes] = True
    own = np.flatnonzero(~is_slave)
    per = len(own)
    local = -np.ones(N, dtype=np.int64)
    local[own] = np.arange(per)
    master_of = dict(zip(cyc.slave_nodes.tolist(), cyc.master_nodes.tolist()))

    def gid(k, i):
        if is_slave[i]:
            return ((k + 1) % n) * per + local[master_of[i]]
        return k * per + local[i]

    table = np.array([[gid(k, i) for i in range(N)] for k in range(n)])
    nodes = np.vstack([sm.nodes[own] @ rotation_matrix(cyc.axis, k * cyc.angle).T for k in range(n)])
    elements = np.vstack([table[k][sm.elements] for k in range(n)])
    ne = sm.n_elements
    surface = np.vstack([sm.surface_faces + [k * ne, 0] for k in range(n)])
    clamped = np.unique(np.concatenate([table[k][np.unique(sm.dirichlet[:, 0])] for k in range(n)]))
    dirichlet = [(i, c) for i in clamped for c in range(sm.dim)]
    mesh = Mesh(nodes, elements, sm.kind, surface, np.array(dirichlet))
    return Sample(mesh, sector.loadcase, material=sector.material), table[0]
