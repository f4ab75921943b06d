"""Finite-difference validation of the adjoint shape gradient.

For a handful of random unit directions the adjoint directional derivative
``<dJ/dX, d>`` is compared with difference quotients of the full pipeline
(state solve plus objective) over a grid of step sizes. The comparison uses
the raw sensitivity field, i.e. before cyclic folding and flank cleanup,
since that is the exact derivative of the discrete objective.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.typing import NDArray

from .adjoint import shape_gradient
from .errors import GeometryError
from .model import Problem, evaluate

DEFAULT_STEPS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)
SCHEMES = ("central", "one-sided")


@dataclass
class FDReport:
    direction_id: int
    step: float  # absolute length
    scheme: str
    fd_value: float
    adjoint_value: float
    ratio: float  # adjoint / fd


def evaluate_J_at(problem: Problem, direction: NDArray, h: float) -> float:
    """Objective after moving the nodes by ``h * direction`` and re-solving."""
    if h == 0:
        return evaluate(problem)[0]
    X = problem.mesh.nodes + h * np.asarray(direction, dtype=float).reshape(problem.mesh.nodes.shape)
    return evaluate(problem.with_nodes(X))[0]


def random_directions(problem: Problem, n: int, seed: int) -> NDArray:
    """``n`` unit directions, standard normal on every unclamped coordinate.

    On cyclic meshes slave nodes copy their master's entry, rotated by the
    sector angle, so perturbed meshes keep a valid pairing.
    """
    mesh = problem.mesh
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((n, *mesh.nodes.shape))
    d[:, mesh.dirichlet[:, 0], mesh.dirichlet[:, 1]] = 0.0
    cyc = mesh.cyclic
    if cyc is not None:
        d[:, cyc.slave_nodes] = d[:, cyc.master_nodes] @ cyc.rotation(mesh.dim).T
    norms = np.linalg.norm(d.reshape(n, -1), axis=1)
    return d / norms[:, None, None]


def raw_gradient(problem: Problem) -> tuple[float, NDArray]:
    """(J, unfolded dJ/dX) of the discrete objective."""
    r = shape_gradient(problem, zero_flanks=False)
    p = r.parts
    return r.J, p["partial"] - (p["dBU"] - p["dF"])


def run_validation(problem: Problem, n_directions: int = 5, steps=DEFAULT_STEPS,
                   scheme: str = "central", seed: int = 0, relative_steps: bool = True,
                   flip_sign: bool = False, gradient: NDArray | None = None) -> list[FDReport]:
    """One :class:`FDReport` per (direction, step).

    Steps are fractions of the mesh diameter unless ``relative_steps`` is
    false. ``flip_sign`` negates the adjoint gradient and exists only as a
    negative control for the gate.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if gradient is None:
        J0, g = raw_gradient(problem)
    else:
        J0, g = evaluate(problem)[0], np.asarray(gradient, dtype=float)
    if flip_sign:
        g = -g
    scale = problem.mesh.diameter if relative_steps else 1.0
    reports = []
    for k, d in enumerate(random_directions(problem, n_directions, seed)):
        adj = float(np.sum(g * d))
        for s in steps:
            h = float(s) * scale
            try:
                Jp = evaluate_J_at(problem, d, h)
                Jm = evaluate_J_at(problem, d, -h) if scheme == "central" else J0
            except GeometryError as exc:
                raise GeometryError(f"direction {k}, step {h:.3e}: {exc}", exc.element) from exc
            fd = (Jp - Jm) / (2 * h) if scheme == "central" else (Jp - J0) / h
            ratio = adj / fd if fd != 0 else math.nan
            reports.append(FDReport(k, h, scheme, fd, adj, ratio))
    return reports


def best_per_direction(reports: list[FDReport]) -> dict[int, FDReport]:
    """The report with the smallest ``|ratio - 1|`` for every direction."""
    best: dict[int, FDReport] = {}
    for r in reports:
        err = abs(r.ratio - 1)
        if not math.isfinite(err):
            continue
        cur = best.get(r.direction_id)
        if cur is None or err < abs(cur.ratio - 1):
            best[r.direction_id] = r
    return best


def error_slope(reports: list[FDReport], direction_id: int, n_points: int = 3) -> float:
    """Least-squares slope of ``log|ratio-1|`` vs ``log step`` over the largest steps.

    The largest steps sit in the truncation-dominated regime, where the
    slope is about 2 for central and 1 for one-sided differences.
    """
    rows = sorted((r for r in reports if r.direction_id == direction_id),
                  key=lambda r: -r.step)[:n_points]
    x = np.log([r.step for r in rows])
    y = np.log([abs(r.ratio - 1) for r in rows])
    return float(np.polyfit(x, y, 1)[0])


def summary(reports: list[FDReport]) -> dict:
    best = best_per_direction(reports)
    dirs = [{"direction_id": k, "best_step": r.step, "best_ratio": r.ratio,
             "best_error": abs(r.ratio - 1)} for k, r in sorted(best.items())]
    ids = sorted({r.direction_id for r in reports})
    return {
        "scheme": reports[0].scheme if reports else None,
        "n_directions": len(ids),
        "n_steps": len(reports) // max(len(ids), 1),
        "directions": dirs,
        "max_best_error": max((d["best_error"] for d in dirs), default=math.inf),
        "error_slopes": [error_slope(reports, k) for k in ids] if reports else [],
    }


def format_table(reports: list[FDReport]) -> str:
    out = io.StringIO()
    out.write("direction_id step scheme fd_value adjoint_value ratio\n")
    for r in reports:
        out.write(f"{r.direction_id} {r.step:.17g} {r.scheme} {r.fd_value:.17g} "
                  f"{r.adjoint_value:.17g} {r.ratio:.17g}\n")
    return out.getvalue()


def format_summary(reports: list[FDReport]) -> str:
    return json.dumps(summary(reports), indent=2)


def reports_as_dicts(reports: list[FDReport]) -> list[dict]:
    return [asdict(r) for r in reports]
