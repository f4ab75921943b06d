"""Mesh container, mesh file I/O and isoparametric geometry.

The node tensor ``nodes`` is the design variable X. A :class:`Mesh` is
immutable; optimisation steps create a new mesh via :meth:`Mesh.with_nodes`.

Mesh file format (line oriented, ``#`` starts a comment, ids are 1-based)::

    dim 3
    nodes 8
    1 0.0 0.0 0.0
    ...
    elements 1 hex8
    1 1 2 3 4 5 6 7 8
    surface 1
    1 2                 # element id, face id (see lcfshape.reference)
    dirichlet 4         # optional
    1 all               # node id, component 1..dim or "all"
    cyclic 4 0 0 1      # optional: sector count, rotation axis
    1 9                 # master id, slave id (slave = master rotated by 2*pi/n)
    flanks 2
    1 6
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numpy.typing import NDArray

from .errors import ConstraintError, GeometryError, ParseError
from .reference import ElementKind, element_kind, face_rule, quadrature, shape_functions

PAIRING_TOLERANCE = 1e-8


def rotation_matrix(axis, angle: float, dim: int = 3) -> NDArray[np.float64]:
    """Rotation by ``angle`` about ``axis`` (through the origin)."""
    c, s = np.cos(angle), np.sin(angle)
    if dim == 2:
        return np.array([[c, -s], [s, c]])
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + s * K + (1 - c) * (K @ K)


@dataclass(frozen=True)
class CyclicSpec:
    sector_count: int
    axis: NDArray[np.float64]
    master_nodes: NDArray[np.int64]
    slave_nodes: NDArray[np.int64]
    flank_faces: NDArray[np.int64] = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    @property
    def angle(self) -> float:
        return 2.0 * np.pi / self.sector_count

    def rotation(self, dim: int = 3, sign: int = 1) -> NDArray[np.float64]:
        return rotation_matrix(self.axis, sign * self.angle, dim)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Validated finite element mesh.

    Internally all indices are 0-based. ``surface_faces`` and ``flank_faces``
    are ``(K, 2)`` arrays of ``(element, local face)``; ``dirichlet`` is a
    ``(K, 2)`` array of ``(node, component)``.
    """

    nodes: NDArray[np.float64]
    elements: NDArray[np.int64]
    kind: str
    surface_faces: NDArray[np.int64]
    dirichlet: NDArray[np.int64] = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    cyclic: CyclicSpec | None = None
    validate: bool = True

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes, float))
        object.__setattr__(self, "elements", _frozen(self.elements, np.int64))
        sf = np.asarray(self.surface_faces, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "surface_faces", _frozen(sf, np.int64))
        dr = np.asarray(self.dirichlet, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "dirichlet", _frozen(dr, np.int64))
        if self.validate:
            check_mesh(self)

    @property
    def element_kind(self) -> ElementKind:
        return element_kind(self.kind)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.nodes.size

    @property
    def diameter(self) -> float:
        """Bounding-box diagonal."""
        return float(np.linalg.norm(self.nodes.max(axis=0) - self.nodes.min(axis=0)))

    @property
    def flank_faces(self) -> NDArray[np.int64]:
        if self.cyclic is None:
            return np.zeros((0, 2), dtype=np.int64)
        return self.cyclic.flank_faces

    def with_nodes(self, nodes, validate: bool = True) -> "Mesh":
        return Mesh(
            nodes, self.elements, self.kind, self.surface_faces,
            self.dirichlet, self.cyclic, validate,
        )

    def dirichlet_mask(self) -> NDArray[np.bool_]:
        """Boolean (N, dim) mask of clamped components."""
        mask = np.zeros(self.nodes.shape, dtype=bool)
        mask[self.dirichlet[:, 0], self.dirichlet[:, 1]] = True
        return mask

    def face_node_ids(self, faces) -> NDArray[np.int64]:
        """Sorted unique global nodes touched by the given faces."""
        ek = self.element_kind
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 2)
        ids = [self.elements[e, ek.face_nodes(f)] for e, f in faces]
        if not ids:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(ids))

    def surface_nodes(self) -> NDArray[np.int64]:
        return self.face_node_ids(self.surface_faces)

    def boundary_faces(self) -> NDArray[np.int64]:
        """All element faces not shared with another element."""
        ek = self.element_kind
        seen: dict[tuple[int, ...], list[tuple[int, int]]] = {}
        corner_mask = [np.flatnonzero(ek.face_nodes(f) < ek.corner_count) for f in range(ek.n_faces)]
        for e, conn in enumerate(self.elements):
            for f in range(ek.n_faces):
                key = tuple(sorted(conn[ek.face_nodes(f)[corner_mask[f]]]))
                seen.setdefault(key, []).append((e, f))
        out = [v[0] for v in seen.values() if len(v) == 1]
        return np.array(sorted(out), dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# geometry kernels (vectorised over elements and points)


def element_geometry(Xe: NDArray, G: NDArray):
    """Jacobian data for element node coordinates at reference points.

    Args:
        Xe: (E, q, d) element node coordinates.
        G: (P, q, d) reference shape gradients.

    Returns:
        J (E, P, d, d) with ``J[i, j] = d x_i / d xi_j``, detJ (E, P),
        and physical shape gradients D (E, P, q, d).
    """
    J = np.einsum("eai,paj->epij", Xe, G)
    detJ = np.linalg.det(J)
    Jinv = np.linalg.inv(J)
    D = np.einsum("paj,epjk->epak", G, Jinv)
    return J, detJ, D


def gram_sqrt(J: NDArray, tangents: NDArray):
    """Face area factor and its tangent data.

    Returns ``sqrt_g`` (E, P) and ``TMinv`` (E, P, d, d-1) with
    ``T = J @ tangents`` and ``TMinv = T (T^T T)^{-1}``; the derivative of
    ``sqrt_g`` with respect to node b, component l is
    ``sqrt_g * sum_a (G tangents)[b, a] * TMinv[l, a]``.
    """
    T = J @ tangents
    M = np.swapaxes(T, -1, -2) @ T
    g = np.linalg.det(M)
    ok = (g > 0)[..., None, None]
    Minv = np.linalg.inv(np.where(ok, M, np.eye(M.shape[-1])))
    return np.sqrt(np.maximum(g, 0.0)), T @ np.where(ok, Minv, np.nan), g


def _check_positive(detJ, elements, what="element", rtol=0.0):
    scale = np.abs(detJ).mean(axis=-1, keepdims=True) if rtol else 0.0
    bad = np.argwhere(~(detJ > rtol * scale))
    if bad.size:
        e = int(elements[bad[0, 0]])
        raise GeometryError(f"{what} {e + 1} is degenerate or inverted (detJ <= 0)", element=e)


def jacobian(mesh: Mesh, element: int, xi) -> tuple[NDArray, float]:
    """Jacobian of the reference map of one element at ``xi``."""
    _, G = shape_functions(mesh.kind, np.atleast_2d(xi))
    J, detJ, _ = element_geometry(mesh.nodes[mesh.elements[[element]]], G)
    _check_positive(detJ, [element])
    return J[0, 0], float(detJ[0, 0])


def jacobian_derivative(mesh: Mesh, element: int, xi) -> NDArray:
    """d(detJ)/d(X_local), shape (q, dim): ``detJ * D``."""
    _, G = shape_functions(mesh.kind, np.atleast_2d(xi))
    _, detJ, D = element_geometry(mesh.nodes[mesh.elements[[element]]], G)
    return detJ[0, 0] * D[0, 0]


def face_gram(mesh: Mesh, face, xi_f) -> float:
    """Area factor sqrt(g_F) of a face at face reference coordinate ``xi_f``."""
    e, f = int(face[0]), int(face[1])
    ek = mesh.element_kind
    xi = ek.face_to_element(f, np.atleast_1d(np.asarray(xi_f, dtype=float)))
    _, G = shape_functions(ek, xi)
    J = np.einsum("ai,paj->pij", mesh.nodes[mesh.elements[e]], G)
    s, _, g = gram_sqrt(J, ek.face_tangent_basis(f))
    if not g[0] > 0:
        raise GeometryError(f"face {f + 1} of element {e + 1} is degenerate", element=e)
    return float(s[0])


def face_gram_derivative(mesh: Mesh, face, xi_f) -> NDArray:
    """d(sqrt g_F)/d(X_local), shape (q, dim)."""
    e, f = int(face[0]), int(face[1])
    ek = mesh.element_kind
    xi = ek.face_to_element(f, np.atleast_1d(np.asarray(xi_f, dtype=float)))
    _, G = shape_functions(ek, xi)
    E = ek.face_tangent_basis(f)
    J = np.einsum("ai,paj->pij", mesh.nodes[mesh.elements[e]], G)
    s, TMinv, _ = gram_sqrt(J, E)
    return s[0] * np.einsum("ba,la->bl", G[0] @ E, TMinv[0])


@dataclass
class FaceGroup:
    """Quadrature data for all listed faces sharing one local face index."""

    face: int
    rows: NDArray[np.int64]  # positions in the originating face list
    elements: NDArray[np.int64]
    N: NDArray  # (P, q)
    G: NDArray  # (P, q, d)
    GE: NDArray  # (P, q, d-1) tangential reference gradients
    weights: NDArray
    tangents: NDArray


def face_groups(mesh: Mesh, faces, order: int) -> Iterator[FaceGroup]:
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 2)
    ek = mesh.element_kind
    for f in range(ek.n_faces):
        rows = np.flatnonzero(faces[:, 1] == f)
        if rows.size == 0:
            continue
        rule = face_rule(mesh.kind, f, order)
        N, G = shape_functions(ek, rule.points)
        yield FaceGroup(f, rows, faces[rows, 0], N, G, G @ rule.tangents, rule.weights, rule.tangents)


def volume_rule_data(mesh: Mesh, order: int):
    rule = quadrature(mesh.kind, order)
    N, G = shape_functions(mesh.kind, rule.points)
    return rule, N, G


def check_mesh(mesh: Mesh) -> None:
    ek = mesh.element_kind
    n = mesh.n_nodes
    if mesh.dim != ek.dim:
        raise GeometryError(f"{ek.name} elements need dim {ek.dim}, mesh has {mesh.dim}")
    if mesh.elements.ndim != 2 or mesh.elements.shape[1] != ek.n_nodes:
        raise GeometryError(f"{ek.name} elements need {ek.n_nodes} nodes each")
    if mesh.elements.size and (mesh.elements.min() < 0 or mesh.elements.max() >= n):
        raise GeometryError("connectivity references a missing node")
    for e, conn in enumerate(mesh.elements):
        if len(set(conn.tolist())) != ek.n_nodes:
            raise GeometryError(f"element {e + 1} repeats a node", element=e)
    # detJ at Gauss points of two rules and at the corners
    corners = ek.node_coords[: ek.corner_count]
    pts = np.vstack([quadrature(ek.name, 2).points, quadrature(ek.name, 3).points, corners])
    _, G = shape_functions(ek, pts)
    detJ = np.linalg.det(np.einsum("eai,paj->epij", mesh.nodes[mesh.elements], G))
    _check_positive(detJ, np.arange(mesh.n_elements), rtol=1e-10)

    def _check_faces(faces, label):
        if faces.size == 0:
            return
        if faces[:, 0].min() < 0 or faces[:, 0].max() >= mesh.n_elements:
            raise GeometryError(f"{label} face references a missing element")
        if faces[:, 1].min() < 0 or faces[:, 1].max() >= ek.n_faces:
            raise GeometryError(f"{label} face id out of range 1..{ek.n_faces}")
        if len({tuple(r) for r in faces.tolist()}) != len(faces):
            raise GeometryError(f"{label} faces listed more than once")

    _check_faces(mesh.surface_faces, "surface")
    if mesh.dirichlet.size:
        if mesh.dirichlet[:, 0].min() < 0 or mesh.dirichlet[:, 0].max() >= n:
            raise ConstraintError("dirichlet references a missing node")
        if mesh.dirichlet[:, 1].min() < 0 or mesh.dirichlet[:, 1].max() >= mesh.dim:
            raise ConstraintError("dirichlet component out of range")
    cyc = mesh.cyclic
    if cyc is not None:
        _check_faces(cyc.flank_faces, "flank")
        s = {tuple(r) for r in mesh.surface_faces.tolist()}
        if any(tuple(r) in s for r in cyc.flank_faces.tolist()):
            raise ConstraintError("flank faces must not be part of the fatigue surface")
        if len(cyc.master_nodes) != len(cyc.slave_nodes):
            raise ConstraintError("cyclic master/slave lists differ in length")
        if len(np.intersect1d(cyc.master_nodes, cyc.slave_nodes)):
            raise ConstraintError("a node cannot be both master and slave")
        if len(cyc.master_nodes):
            R = cyc.rotation(mesh.dim)
            gap = np.linalg.norm(mesh.nodes[cyc.master_nodes] @ R.T - mesh.nodes[cyc.slave_nodes], axis=1)
            tol = PAIRING_TOLERANCE * mesh.diameter
            if gap.max() > tol:
                i = int(np.argmax(gap))
                raise ConstraintError(
                    f"cyclic pair ({cyc.master_nodes[i] + 1}, {cyc.slave_nodes[i] + 1}) "
                    f"misses the sector rotation by {gap[i]:.3e} > {tol:.3e}"
                )


# ---------------------------------------------------------------------------
# file I/O


def _tokens(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


def parse_mesh(text: str) -> Mesh:
    """Parse mesh file content into a validated :class:`Mesh`."""
    lines = list(_tokens(text))
    pos = 0

    def take(keyword=None):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(f"unexpected end of file, expected {keyword or 'data'}",
                             lines[-1][0] if lines else None)
        no, tok = lines[pos]
        if keyword is not None and tok[0] != keyword:
            raise ParseError(f"expected '{keyword}' block, got '{tok[0]}'", no)
        pos += 1
        return no, tok

    def ints(no, tok, n=None):
        try:
            vals = [int(t) for t in tok]
        except ValueError:
            raise ParseError(f"expected integers, got {' '.join(tok)!r}", no) from None
        if n is not None and len(vals) != n:
            raise ParseError(f"expected {n} integers, got {len(vals)}", no)
        return vals

    def count(no, tok, extra=0):
        if len(tok) < 2 + extra:
            raise ParseError(f"'{tok[0]}' needs a count", no)
        return ints(no, [tok[1]])[0]

    no, tok = take("dim")
    dim = ints(no, tok[1:], 1)[0]
    if dim not in (2, 3):
        raise ParseError("dim must be 2 or 3", no)

    no, tok = take("nodes")
    n_nodes = count(no, tok)
    nodes = np.empty((n_nodes, dim))
    for i in range(n_nodes):
        no, tok = take()
        if len(tok) != dim + 1:
            raise ParseError(f"node line needs id and {dim} coordinates", no)
        if ints(no, tok[:1])[0] != i + 1:
            raise ParseError(f"node ids must be consecutive from 1, expected {i + 1}", no)
        try:
            nodes[i] = [float(t) for t in tok[1:]]
        except ValueError:
            raise ParseError(f"bad coordinate in {' '.join(tok)!r}", no) from None

    no, tok = take("elements")
    if len(tok) != 3:
        raise ParseError("expected 'elements <M> <kind>'", no)
    n_el = count(no, tok)
    try:
        ek = element_kind(tok[2])
    except Exception as exc:
        raise ParseError(str(exc), no) from None
    conn = np.empty((n_el, ek.n_nodes), dtype=np.int64)
    for i in range(n_el):
        no, tok = take()
        vals = ints(no, tok, ek.n_nodes + 1)
        if vals[0] != i + 1:
            raise ParseError(f"element ids must be consecutive from 1, expected {i + 1}", no)
        conn[i] = np.array(vals[1:]) - 1
        if conn[i].min() < 0 or conn[i].max() >= n_nodes:
            raise ParseError(f"element {i + 1} references a missing node", no)

    def face_block(keyword):
        no, tok = take(keyword)
        k = count(no, tok)
        out = np.empty((k, 2), dtype=np.int64)
        for i in range(k):
            no, tok = take()
            out[i] = np.array(ints(no, tok, 2)) - 1
        return out

    surface = face_block("surface")

    dirichlet = np.zeros((0, 2), dtype=np.int64)
    if pos < len(lines) and lines[pos][1][0] == "dirichlet":
        no, tok = take("dirichlet")
        rows = []
        for _ in range(count(no, tok)):
            no, tok = take()
            if len(tok) != 2:
                raise ParseError("dirichlet line needs node id and component", no)
            node = ints(no, tok[:1])[0] - 1
            if tok[1] == "all":
                rows.extend((node, c) for c in range(dim))
            else:
                c = ints(no, tok[1:])[0]
                if not 1 <= c <= dim:
                    raise ParseError(f"component must be in 1..{dim} or 'all'", no)
                rows.append((node, c - 1))
        dirichlet = np.unique(np.array(rows, dtype=np.int64).reshape(-1, 2), axis=0)

    cyclic = None
    if pos < len(lines) and lines[pos][1][0] == "cyclic":
        no, tok = take("cyclic")
        if len(tok) != 5:
            raise ParseError("expected 'cyclic <n_sectors> <ax> <ay> <az>'", no)
        n_sec = ints(no, tok[1:2])[0]
        if n_sec < 1:
            raise ParseError("sector count must be positive", no)
        try:
            axis = np.array([float(t) for t in tok[2:]])
        except ValueError:
            raise ParseError("bad cyclic axis", no) from None
        if not np.linalg.norm(axis) > 0:
            raise ParseError("cyclic axis must be nonzero", no)
        pairs = []
        while pos < len(lines) and lines[pos][1][0] != "flanks":
            no, tok = take()
            pairs.append(ints(no, tok, 2))
        flanks = face_block("flanks")
        pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2) - 1
        cyclic = CyclicSpec(n_sec, axis / np.linalg.norm(axis), pairs[:, 0], pairs[:, 1], flanks)

    if pos < len(lines):
        raise ParseError(f"unexpected content '{' '.join(lines[pos][1])}'", lines[pos][0])
    return Mesh(nodes, conn, ek.name, surface, dirichlet, cyclic)


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        return parse_mesh(fh.read())


def format_mesh(mesh: Mesh) -> str:
    out = io.StringIO()
    out.write(f"dim {mesh.dim}\nnodes {mesh.n_nodes}\n")
    for i, x in enumerate(mesh.nodes, start=1):
        out.write(f"{i} " + " ".join(repr(float(v)) for v in x) + "\n")
    out.write(f"elements {mesh.n_elements} {mesh.kind}\n")
    for i, conn in enumerate(mesh.elements, start=1):
        out.write(f"{i} " + " ".join(str(int(v) + 1) for v in conn) + "\n")
    out.write(f"surface {len(mesh.surface_faces)}\n")
    for e, f in mesh.surface_faces:
        out.write(f"{e + 1} {f + 1}\n")
    if len(mesh.dirichlet):
        rows = []
        for node in np.unique(mesh.dirichlet[:, 0]):
            comps = np.sort(mesh.dirichlet[mesh.dirichlet[:, 0] == node, 1])
            if len(comps) == mesh.dim:
                rows.append(f"{node + 1} all")
            else:
                rows.extend(f"{node + 1} {c + 1}" for c in comps)
        out.write(f"dirichlet {len(rows)}\n" + "\n".join(rows) + "\n")
    if mesh.cyclic is not None:
        c = mesh.cyclic
        ax = np.zeros(3)
        ax[: len(c.axis)] = c.axis
        out.write(f"cyclic {c.sector_count} " + " ".join(repr(float(v)) for v in ax) + "\n")
        for m, s in zip(c.master_nodes, c.slave_nodes):
            out.write(f"{m + 1} {s + 1}\n")
        out.write(f"flanks {len(c.flank_faces)}\n")
        for e, f in c.flank_faces:
            out.write(f"{e + 1} {f + 1}\n")
    return out.getvalue()


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_mesh(mesh))
