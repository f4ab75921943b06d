"""Reference elements, shape functions and tensor Gauss rules.

Reference domains are ``[-1, 1]^dim``. Local node ordering follows the usual
Abaqus/VTK convention:

* ``quad4``: corners (-1,-1), (1,-1), (1,1), (-1,1).
* ``quad8``: the four corners, then mid-edge nodes of edges 1-2, 2-3, 3-4, 4-1.
* ``hex8``: bottom corners (zeta=-1) counter-clockwise, then top corners.
* ``hex20``: the eight corners, mid-edge nodes of the bottom edges
  (1-2, 2-3, 3-4, 4-1), of the top edges (5-6, 6-7, 7-8, 8-5), then of the
  vertical edges (1-5, 2-6, 3-7, 4-8).

Face numbering (1-based in files, 0-based internally)::

    hex:  S1 zeta=-1   S2 zeta=+1   S3 eta=-1   S4 xi=+1   S5 eta=+1   S6 xi=-1
    quad: S1 eta=-1    S2 xi=+1     S3 eta=+1   S4 xi=-1
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, UnsupportedElementError

MAX_GAUSS_ORDER = 10

_QUAD4 = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
_QUAD8 = np.vstack([_QUAD4, [[0, -1], [1, 0], [0, 1], [-1, 0]]])
_HEX8 = np.array(
    [
        [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
        [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
    ],
    dtype=float,
)
_HEX20 = np.vstack(
    [
        _HEX8,
        [[0, -1, -1], [1, 0, -1], [0, 1, -1], [-1, 0, -1]],
        [[0, -1, 1], [1, 0, 1], [0, 1, 1], [-1, 0, 1]],
        [[-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0]],
    ]
)

# (fixed axis, side) per face
_HEX_FACES = ((2, -1.0), (2, 1.0), (1, -1.0), (0, 1.0), (1, 1.0), (0, -1.0))
_QUAD_FACES = ((1, -1.0), (0, 1.0), (1, 1.0), (0, -1.0))


@dataclass(frozen=True)
class ElementKind:
    name: str
    dim: int
    node_coords: NDArray[np.float64]
    faces: tuple[tuple[int, float], ...]
    vtk_type: int
    corner_count: int

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_nodes(self, face: int) -> NDArray[np.int64]:
        """Local indices of the nodes lying on ``face`` (0-based)."""
        axis, side = self.faces[face]
        return np.flatnonzero(self.node_coords[:, axis] == side)

    def face_tangent_basis(self, face: int) -> NDArray[np.float64]:
        """Columns are d(xi_hat)/d(face coordinate); shape (dim, dim-1)."""
        axis, _ = self.faces[face]
        free = [a for a in range(self.dim) if a != axis]
        return np.eye(self.dim)[:, free]

    def face_to_element(self, face: int, pts: NDArray[np.float64]) -> NDArray[np.float64]:
        """Embed face reference points (n, dim-1) into element coordinates."""
        axis, side = self.faces[face]
        pts = np.atleast_2d(pts)
        out = np.empty((pts.shape[0], self.dim))
        free = [a for a in range(self.dim) if a != axis]
        out[:, free] = pts
        out[:, axis] = side
        return out


ELEMENTS: dict[str, ElementKind] = {
    "quad4": ElementKind("quad4", 2, _QUAD4, _QUAD_FACES, 9, 4),
    "quad8": ElementKind("quad8", 2, _QUAD8, _QUAD_FACES, 23, 4),
    "hex8": ElementKind("hex8", 3, _HEX8, _HEX_FACES, 12, 8),
    "hex20": ElementKind("hex20", 3, _HEX20, _HEX_FACES, 25, 8),
}


def element_kind(kind: str | ElementKind) -> ElementKind:
    if isinstance(kind, ElementKind):
        return kind
    try:
        return ELEMENTS[kind]
    except KeyError:
        raise UnsupportedElementError(f"unsupported element kind {kind!r}") from None


def _lagrange_linear(xi, nodes):
    # product of (1 + xi_k * node_k)/2 over axes
    terms = 0.5 * (1.0 + xi[..., None, :] * nodes)
    vals = np.prod(terms, axis=-1)
    dim = nodes.shape[1]
    grads = np.empty(vals.shape + (dim,))
    for k in range(dim):
        others = np.prod(np.delete(terms, k, axis=-1), axis=-1)
        grads[..., k] = 0.5 * nodes[:, k] * others
    return vals, grads


def _serendipity(xi, nodes, corner_count):
    dim = nodes.shape[1]
    scale = 0.5**dim
    corner = nodes[:corner_count]
    mid = nodes[corner_count:]
    vals = np.empty(xi.shape[:-1] + (nodes.shape[0],))
    grads = np.empty(vals.shape + (dim,))

    # corners: scale * prod(1 + xi xi_i) * (sum xi xi_i - (dim - 1))
    t = 1.0 + xi[..., None, :] * corner
    p = np.prod(t, axis=-1)
    s = np.sum(xi[..., None, :] * corner, axis=-1) - (dim - 1)
    vals[..., :corner_count] = scale * p * s
    for k in range(dim):
        dp = corner[:, k] * np.prod(np.delete(t, k, axis=-1), axis=-1)
        grads[..., :corner_count, k] = scale * (dp * s + p * corner[:, k])

    # mid-edge: one zero coordinate a; 2 * scale * (1 - xi_a^2) * prod_{k != a}(1 + xi_k xi_ik)
    for j, node in enumerate(mid, start=corner_count):
        a = int(np.flatnonzero(node == 0)[0])
        others = [k for k in range(dim) if k != a]
        bub = 1.0 - xi[..., a] ** 2
        lin = [1.0 + xi[..., k] * node[k] for k in others]
        prod_lin = np.prod(lin, axis=0)
        vals[..., j] = 2 * scale * bub * prod_lin
        grads[..., j, a] = 2 * scale * (-2.0 * xi[..., a]) * prod_lin
        for i, k in enumerate(others):
            rest = np.prod([lin[r] for r in range(len(lin)) if r != i], axis=0)
            grads[..., j, k] = 2 * scale * bub * node[k] * rest
    return vals, grads


def shape_functions(kind: str | ElementKind, xi) -> tuple[NDArray, NDArray]:
    """Shape function values and reference gradients.

    Args:
        kind: element kind name.
        xi: reference coordinates, shape ``(dim,)`` or ``(..., dim)``.

    Returns:
        ``values`` with shape ``(..., q)`` and ``gradients`` with shape
        ``(..., q, dim)``.
    """
    ek = element_kind(kind)
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != ek.dim:
        raise ConfigError(f"{ek.name} expects {ek.dim} reference coordinates")
    if ek.corner_count == ek.n_nodes:
        return _lagrange_linear(xi, ek.node_coords)
    return _serendipity(xi, ek.node_coords, ek.corner_count)


@dataclass(frozen=True)
class QuadratureRule:
    points: NDArray[np.float64]  # (n, dim)
    weights: NDArray[np.float64]  # (n,)

    def __len__(self) -> int:
        return len(self.weights)


_DOMAIN_DIM = {"line": 1, "quad": 2, "hex": 3, "quad4": 2, "quad8": 2, "hex8": 3, "hex20": 3}


@lru_cache(maxsize=None)
def quadrature(kind: str, order: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule with ``order`` points per direction.

    ``kind`` is a domain name (``line``, ``quad``, ``hex``) or an element kind.
    """
    if kind not in _DOMAIN_DIM:
        raise UnsupportedElementError(f"no quadrature for {kind!r}")
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= MAX_GAUSS_ORDER:
        raise ConfigError(f"unsupported quadrature order {order!r} (1..{MAX_GAUSS_ORDER})")
    dim = _DOMAIN_DIM[kind]
    x, w = np.polynomial.legendre.leggauss(int(order))
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    pts.flags.writeable = False
    wts.flags.writeable = False
    return QuadratureRule(pts, wts)


@dataclass(frozen=True)
class FaceRule:
    """Face quadrature expressed in element reference coordinates."""

    points: NDArray[np.float64]  # (n, dim) in the element's reference frame
    weights: NDArray[np.float64]
    tangents: NDArray[np.float64]  # (dim, dim-1)


@lru_cache(maxsize=None)
def face_rule(kind: str, face: int, order: int) -> FaceRule:
    ek = element_kind(kind)
    base = quadrature({2: "line", 3: "quad"}[ek.dim], order)
    return FaceRule(ek.face_to_element(face, base.points), base.weights, ek.face_tangent_basis(face))
