"""Probabilistic low-cycle-fatigue post-processing.

The pointwise chain maps an elastic von Mises amplitude to a crack
initiation density::

    sigma_el --Neuber--> sigma_elpl --Ramberg-Osgood--> eps_a --CMB^-1--> log N
    density = (1 / N)^m = exp(-m log N)

Lives are carried as ``log N`` so that near-zero stresses give a density
that underflows cleanly to zero instead of overflowing ``N``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .elasticity import Material, displacement_gradient, stress_from_gradient, von_mises
from .errors import NumericError, SaturatedLifeWarning
from .mesh import Mesh, element_geometry, face_groups, gram_sqrt
from .reference import shape_functions

LOG_N_MIN = math.log(1e-2)
LOG_N_MAX = math.log(1e14)
MAX_ITER = 200


def _safeguarded_newton(f, fprime, x0, lo, hi, xtol, ftol):
    """Vectorised Newton iteration kept inside a sign-change bracket.

    ``f`` must be positive at ``lo`` and negative at ``hi`` (or vice versa,
    consistently for all entries).
    """
    x = np.array(x0, dtype=float)
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flo_sign = np.sign(f(lo))
    active = np.ones(x.shape, dtype=bool)
    for _ in range(MAX_ITER):
        fx = f(x)
        same = np.sign(fx) == flo_sign
        lo = np.where(same & active, x, lo)
        hi = np.where(~same & active, x, hi)
        xn = x - fx / fprime(x)
        outside = (xn < np.minimum(lo, hi)) | (xn > np.maximum(lo, hi)) | ~np.isfinite(xn)
        xn = np.where(outside, 0.5 * (lo + hi), xn)
        converged = np.abs(fx) <= ftol
        xn = np.where(converged, x, xn)
        done = converged | (np.abs(xn - x) <= xtol)
        x = np.where(active, xn, x)
        active &= ~done
        if not active.any():
            return x
    raise NumericError("root finding did not converge within 200 iterations")


def neuber(sigma_el, material: Material):
    """Elastic-plastic amplitude from Neuber's rule.

    Solves ``sigma_el^2/E = s^2/E + s (s/K)^(1/n')`` for ``s`` in
    ``[0, sigma_el]``.
    """
    se = np.asarray(sigma_el, dtype=float)
    if np.any(se < 0):
        raise ValueError("sigma_el must be >= 0")
    E, K, p = material.E, material.K, 1.0 / material.n_prime
    target = se**2 / E
    pos = se > 0
    out = np.zeros_like(se)
    if np.any(pos):
        t = target[pos]
        s_max = se[pos]

        def f(s):
            return s**2 / E + s * (np.maximum(s, 0) / K) ** p - t

        def fp(s):
            return 2 * s / E + (1 + p) * (np.maximum(s, 0) / K) ** p

        out[pos] = _safeguarded_newton(f, fp, s_max, np.zeros_like(s_max), s_max,
                                       xtol=1e-16 * s_max, ftol=1e-14 * t)
    out[np.isnan(se)] = np.nan
    return out if out.ndim else float(out)


def neuber_derivative(sigma_el, sigma_elpl, material: Material):
    """d sigma_elpl / d sigma_el by implicit differentiation."""
    se = np.asarray(sigma_el, dtype=float)
    s = np.asarray(sigma_elpl, dtype=float)
    p = 1.0 / material.n_prime
    denom = 2 * s / material.E + (1 + p) * (s / material.K) ** p
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(se > 0, (2 * se / material.E) / denom, 1.0)
    return d


def ramberg_osgood(sigma_elpl, material: Material):
    s = np.asarray(sigma_elpl, dtype=float)
    return s / material.E + (s / material.K) ** (1.0 / material.n_prime)


def ramberg_osgood_derivative(sigma_elpl, material: Material):
    s = np.asarray(sigma_elpl, dtype=float)
    p = 1.0 / material.n_prime
    with np.errstate(divide="ignore", invalid="ignore"):
        plastic = np.where(s > 0, p * (s / material.K) ** p / s, 0.0 if p > 1 else np.inf)
    return 1.0 / material.E + plastic


def cmb(log_n, material: Material):
    """Strain amplitude for ``log N`` cycles (Coffin-Manson-Basquin)."""
    t = np.asarray(log_n, dtype=float) + math.log(2.0)
    return material.sigma_f / material.E * np.exp(material.b * t) + material.eps_f * np.exp(material.c * t)


def cmb_derivative(log_n, material: Material):
    """d eps / d log N (strictly negative)."""
    t = np.asarray(log_n, dtype=float) + math.log(2.0)
    return (material.b * material.sigma_f / material.E * np.exp(material.b * t)
            + material.c * material.eps_f * np.exp(material.c * t))


def cmb_inverse(eps_a, material: Material, return_saturated: bool = False):
    """``log N`` solving ``CMB(N) = eps_a``.

    Strains above ``CMB(1e-2)`` are clamped to ``log 1e-2`` with a
    :class:`SaturatedLifeWarning`. The high-life side is not clamped; the
    bracket is extended far enough that each CMB term alone is below
    ``eps_a / 2``, so small strains keep their (large) finite lives.
    """
    eps = np.asarray(eps_a, dtype=float)
    if np.any(~(eps > 0)):
        raise ValueError("eps_a must be > 0")
    m = material
    lo = np.full(eps.shape, LOG_N_MIN)
    saturated = cmb(lo, m) <= eps
    ln2 = math.log(2.0)
    hi_basquin = np.log(0.5 * eps * m.E / m.sigma_f) / m.b - ln2
    hi_coffin = np.log(0.5 * eps / m.eps_f) / m.c - ln2
    hi = np.maximum(np.maximum(hi_basquin, hi_coffin), LOG_N_MAX)
    out = np.full(eps.shape, LOG_N_MIN)
    ok = ~saturated
    if np.any(ok):
        e = eps[ok]
        out[ok] = _safeguarded_newton(
            lambda t: cmb(t, m) - e, lambda t: cmb_derivative(t, m),
            lo[ok], lo[ok], hi[ok], xtol=1e-15 * np.maximum(1.0, np.abs(hi[ok])), ftol=1e-14 * e)
    if np.any(saturated):
        warnings.warn(f"{int(saturated.sum())} point(s) beyond the low-cycle bracket, "
                      "life clamped to 1e-2 cycles", SaturatedLifeWarning, stacklevel=2)
    if out.ndim == 0:
        out = float(out)
    return (out, saturated) if return_saturated else out


@dataclass
class FatiguePointState:
    sigma_el: NDArray
    sigma_elpl: NDArray
    eps_a: NDArray
    log_Ndet: NDArray


def fatigue_chain(sigma_el, material: Material, derivative: bool = False):
    """Evaluate the pointwise chain; optionally d(log N)/d(sigma_el).

    Points with zero stress get ``log N = +inf`` and zero derivative.
    """
    se = np.atleast_1d(np.asarray(sigma_el, dtype=float))
    pos = se > 0
    s = np.zeros_like(se)
    eps = np.zeros_like(se)
    logn = np.full(se.shape, np.inf)
    dlogn = np.zeros_like(se)
    if np.any(pos):
        s[pos] = neuber(se[pos], material)
        eps[pos] = ramberg_osgood(s[pos], material)
        logn[pos], sat = cmb_inverse(eps[pos], material, return_saturated=True)
        if derivative:
            d = (neuber_derivative(se[pos], s[pos], material)
                 * ramberg_osgood_derivative(s[pos], material)
                 / cmb_derivative(logn[pos], material))
            dlogn[pos] = np.where(sat, 0.0, d)
    nan = np.isnan(se)
    s[nan] = eps[nan] = logn[nan] = dlogn[nan] = np.nan
    state = FatiguePointState(se, s, eps, logn)
    return (state, dlogn) if derivative else state


def density(log_n, material: Material):
    """Crack initiation density ``(1/N)^m`` from ``log N``."""
    return np.exp(-material.m * np.asarray(log_n, dtype=float))


# ---------------------------------------------------------------------------
# surface functional


@dataclass
class Objective:
    J: float
    per_face: NDArray  # one entry per row of the face list used


@dataclass
class SurfaceTerms:
    """Per face-group quadrature data of the fatigue functional."""

    group: object
    weights: NDArray  # (E, P) quadrature weight times area factor
    rho: NDArray  # (E, P) density
    sqrt_g: NDArray
    # derivative data, present when requested
    drho_dH: NDArray | None = None  # (E, P, d, d)
    D: NDArray | None = None
    H: NDArray | None = None
    TMinv: NDArray | None = None


def surface_terms(mesh: Mesh, material: Material, U, face_order: int = 6,
                  amplitude_factor: float = 1.0, derivatives: bool = False, faces=None):
    """Evaluate the density at all surface quadrature points.

    Flank faces of a cyclic model are never part of ``mesh.surface_faces``
    and therefore never enter the functional.
    """
    faces = mesh.surface_faces if faces is None else faces
    d = mesh.dim
    for grp in face_groups(mesh, faces, face_order):
        J, detJ, D = element_geometry(mesh.nodes[mesh.elements[grp.elements]], grp.G)
        sqrt_g, TMinv, _ = gram_sqrt(J, grp.tangents)
        H = displacement_gradient(mesh, U, grp.elements, D)
        vm, s = von_mises(stress_from_gradient(H, material))
        sigma_el = amplitude_factor * vm
        st, dlogn = fatigue_chain(sigma_el.ravel(), material, derivative=True)
        rho = density(st.log_Ndet, material).reshape(vm.shape)
        bad = ~np.isfinite(rho)
        if bad.any():
            e, p = np.argwhere(bad)[0]
            raise NumericError(f"non-finite density at face ({grp.elements[e] + 1}, "
                               f"{grp.face + 1}), quadrature point {p + 1}")
        terms = SurfaceTerms(grp, grp.weights * sqrt_g, rho, sqrt_g)
        if derivatives:
            drho = (-material.m * rho.ravel() * dlogn).reshape(vm.shape) * amplitude_factor
            with np.errstate(divide="ignore", invalid="ignore"):
                coef = np.where(vm > 0, drho * 3.0 * material.mu / vm, 0.0)
            # d vm / d H = 3 mu s / vm on the in-plane block (trace of s is zero)
            terms.drho_dH = coef[..., None, None] * s[..., :d, :d]
            terms.D, terms.H, terms.TMinv = D, H, TMinv
        yield terms


def objective_J(mesh: Mesh, material: Material, U, face_order: int = 6,
                amplitude_factor: float = 1.0, faces=None) -> Objective:
    """Surface quadrature of the crack initiation density."""
    faces = mesh.surface_faces if faces is None else np.asarray(faces).reshape(-1, 2)
    per_face = np.zeros(len(faces))
    for t in surface_terms(mesh, material, U, face_order, amplitude_factor, faces=faces):
        per_face[t.group.rows] = np.sum(t.weights * t.rho, axis=1)
    return Objective(float(per_face.sum()), per_face)


def pof(J: float, cycles_n: float, material: Material) -> float:
    """Failure probability ``1 - exp(-n^m J)``."""
    if J < 0 or not cycles_n > 0:
        raise ValueError("need J >= 0 and cycles_n > 0")
    return float(-np.expm1(-(cycles_n**material.m) * J))


def weibull_scale(J: float, material: Material) -> float:
    """Weibull scale ``eta = J^(-1/m)``; ``math.inf`` for ``J == 0``."""
    if J < 0:
        raise ValueError("J must be >= 0")
    if J == 0:
        return math.inf
    return float(J ** (-1.0 / material.m))


def det_life(mesh: Mesh, material: Material, U, amplitude_factor: float = 1.0):
    """Deterministic life at surface nodes (diagnostic, not differentiable).

    Returns ``(nodes, log_Ndet, argmin_node, min_log_Ndet)`` where the von
    Mises stress at each surface node is averaged over the surface faces
    touching it.
    """
    ek = mesh.element_kind
    acc = np.zeros(mesh.n_nodes)
    cnt = np.zeros(mesh.n_nodes)
    for f in range(ek.n_faces):
        elems = mesh.surface_faces[mesh.surface_faces[:, 1] == f, 0]
        if elems.size == 0:
            continue
        local = ek.face_nodes(f)
        _, G = shape_functions(ek, ek.node_coords[local])
        _, _, D = element_geometry(mesh.nodes[mesh.elements[elems]], G)
        vm, _ = von_mises(stress_from_gradient(displacement_gradient(mesh, U, elems, D), material))
        ids = mesh.elements[elems][:, local]
        np.add.at(acc, ids, vm)
        np.add.at(cnt, ids, 1.0)
    nodes = np.flatnonzero(cnt)
    vm_nodes = acc[nodes] / cnt[nodes]
    logn = fatigue_chain(amplitude_factor * vm_nodes, material).log_Ndet
    i = int(np.argmin(logn))
    return nodes, logn, int(nodes[i]), float(logn[i])
