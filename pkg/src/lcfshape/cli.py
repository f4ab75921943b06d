"""Command-line front end: ``lcfshape <command> --mesh M --config C --out DIR``.

Every option can also come from the environment: ``LCFSHAPE_MESH``,
``LCFSHAPE_CONFIG``, ``LCFSHAPE_OUT``, ``LCFSHAPE_SEED`` and
``LCFSHAPE_THREADS``. Command-line values win over the environment.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, fdcheck, moo, samples
from .adjoint import STAGES, shape_gradient
from .config import RunConfig, format_config, read_config
from .elasticity import FIXED, FOLLOWER, nodal_von_mises
from .errors import ConfigError, GateFailure, LCFShapeError
from .lcf import det_life, pof, weibull_scale
from .mesh import Mesh, read_mesh, write_mesh
from .model import Problem, objective, solve
from .vtk import write_vtk

log = logging.getLogger("lcfshape")

DEFAULT_SEED = 12345
ENV = {"mesh": "LCFSHAPE_MESH", "config": "LCFSHAPE_CONFIG", "out": "LCFSHAPE_OUT",
       "seed": "LCFSHAPE_SEED", "threads": "LCFSHAPE_THREADS"}


# ---------------------------------------------------------------------------
# helpers


def _load(path, args) -> tuple[Mesh, RunConfig, Problem]:
    if path is None:
        raise ConfigError("no mesh given (use --mesh or LCFSHAPE_MESH)")
    if args.config is None:
        raise ConfigError("no config given (use --config or LCFSHAPE_CONFIG)")
    if not Path(path).is_file():
        raise ConfigError(f"mesh file not found: {path}")
    mesh = read_mesh(path)
    cfg = read_config(args.config, mesh.dim)
    num = cfg.numerics if args.threads is None else replace(cfg.numerics, workers=args.threads)
    return mesh, cfg, Problem(mesh, cfg.material, cfg.loadcase, num).bound()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _header(command: str, mesh: Mesh, cfg: RunConfig, mesh_path) -> str:
    sectors = mesh.cyclic.sector_count if mesh.cyclic is not None else 1
    lc = cfg.loadcase
    return (f"# lcfshape {__version__} {command}: mesh={mesh_path} kind={mesh.kind} "
            f"nodes={mesh.n_nodes} elements={mesh.n_elements} omega={lc.omega!r} "
            f"sectors={sectors} cycles_n={lc.cycles_n!r} tractions={len(lc.tractions)}\n")


def _node_table(path: Path, schema: str, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=float).reshape(len(values), -1)
    with open(path, "w") as fh:
        fh.write(schema + "\n")
        for i, row in enumerate(values, start=1):
            fh.write(f"{i} " + " ".join(f"{v:.17g}" for v in row) + "\n")


def _vector_schema(prefix: str, dim: int) -> str:
    return "node_id " + " ".join(f"{prefix}{c}" for c in "xyz"[:dim])


def _life_field(mesh, material, U, af) -> tuple[np.ndarray, tuple]:
    nodes, logn, node, min_logn = det_life(mesh, material, U, af)
    field_ = np.full(mesh.n_nodes, np.inf)
    field_[nodes] = logn
    return field_, (node, min_logn)


def _state_report(problem: Problem, U) -> dict:
    m, mat, num = problem.mesh, problem.material, problem.numerics
    J = objective(problem, U).J
    P = pof(J, problem.loadcase.cycles_n, mat)
    life, (node, min_logn) = _life_field(m, mat, U, num.amplitude_factor)
    return {"J": J, "PoF": P, "eta": weibull_scale(J, mat), "min_log_Ndet": min_logn,
            "min_Ndet": float(np.exp(min_logn)), "min_life_node": node + 1, "life": life,
            "von_mises": nodal_von_mises(m, mat, U)}


def _write_report(path: Path, header: str, rows: dict) -> None:
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("key value\n")
        for k, v in rows.items():
            fh.write(f"{k} {v!r}\n" if isinstance(v, float) else f"{k} {v}\n")


def _scalar_rows(rep: dict) -> dict:
    return {k: rep[k] for k in ("J", "PoF", "eta", "min_Ndet", "min_log_Ndet", "min_life_node")}


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    mesh, cfg, problem = _load(args.mesh[0], args)
    st = solve(problem)
    rep = _state_report(problem, st.U)
    out = _out_dir(args)
    header = _header("solve", mesh, cfg, args.mesh[0])
    _write_report(out / "solve.txt", header, _scalar_rows(rep))
    U = st.U.reshape(mesh.nodes.shape)
    _node_table(out / "displacement.txt", _vector_schema("u", mesh.dim), U)
    _node_table(out / "von_mises.txt", "node_id von_mises", rep["von_mises"])
    write_vtk(out / "solve.vtk", mesh, {"displacement": U, "von_mises": rep["von_mises"],
                                        "log_Ndet": rep["life"]})
    sys.stdout.write(header)
    for k, v in _scalar_rows(rep).items():
        print(f"{k} {v}")
    return 0


def _timing_table(timings: dict) -> str:
    lines = ["seconds stage"]
    lines += [f"{timings[s]:.6f} {s}" for s in STAGES]
    return "\n".join(lines) + "\n"


def cmd_grad(args) -> int:
    mesh, cfg, problem = _load(args.mesh[0], args)
    r = shape_gradient(problem)
    rep = _state_report(problem, r.U)
    out = _out_dir(args)
    header = _header("grad", mesh, cfg, args.mesh[0])
    rows = _scalar_rows(rep) | {"adjoint_residual": r.adjoint_residual}
    _write_report(out / "grad.txt", header, rows)
    _node_table(out / "dJ_dX.txt", _vector_schema("g", mesh.dim), r.dJ_dX)
    _node_table(out / "dPoF_dX.txt", _vector_schema("g", mesh.dim), r.dPoF_dX)
    (out / "timings.txt").write_text(_timing_table(r.timings))
    write_vtk(out / "grad.vtk", mesh, {
        "displacement": r.U.reshape(mesh.nodes.shape), "von_mises": rep["von_mises"],
        "log_Ndet": rep["life"], "dJ_dX": r.dJ_dX, "dPoF_dX": r.dPoF_dX})
    sys.stdout.write(header)
    for k, v in rows.items():
        print(f"{k} {v}")
    sys.stdout.write(_timing_table(r.timings))
    return 0


def cmd_check_grad(args) -> int:
    mesh, cfg, problem = _load(args.mesh[0], args)
    cg = cfg.check_grad
    scheme = args.scheme or cg.scheme
    gate = cg.gate if args.gate is None else args.gate
    n_dir = cg.directions if args.directions is None else args.directions
    schemes = fdcheck.SCHEMES if scheme == "both" else (scheme,)
    out = _out_dir(args)
    J, g = fdcheck.raw_gradient(problem)
    all_reports, summaries = [], {}
    for s in schemes:
        reports = fdcheck.run_validation(problem, n_dir, cg.steps, s, args.seed,
                                         flip_sign=args.flip_sign, gradient=g)
        all_reports += reports
        summaries[s] = fdcheck.summary(reports)
    (out / "fdcheck.txt").write_text(fdcheck.format_table(all_reports))
    gated = "central" if "central" in summaries else schemes[0]
    worst = summaries[gated]["max_best_error"]
    summary = {"seed": args.seed, "gate": gate, "gated_scheme": gated, "passed": worst <= gate,
               "schemes": summaries}
    (out / "fdcheck.json").write_text(json.dumps(summary, indent=2) + "\n")
    sys.stdout.write(_header("check-grad", mesh, cfg, args.mesh[0]))
    sys.stdout.write(fdcheck.format_table(all_reports))
    print(f"worst best-step |ratio-1| ({gated}): {worst:.3e}, gate {gate:.1e}")
    if not worst <= gate:
        raise GateFailure(f"gradient check failed: {worst:.3e} > {gate:.1e}")
    return 0


def cmd_optimize(args) -> int:
    starts = []
    cfg = None
    for path in args.mesh:
        _, cfg, problem = _load(path, args)
        starts.append(problem)
    dc = cfg.optimize
    if args.max_iter is not None:
        dc = replace(dc, max_iter=args.max_iter)
    if args.threads is not None:
        dc = replace(dc, workers=args.threads)
    out = _out_dir(args)
    snapshot = None
    if args.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)

        def snapshot(k, it, mesh):
            write_mesh(mesh, snap_dir / f"start{k}_iter{it:04d}.mesh")
    points, front = moo.pareto_sweep(starts, dc, snapshot)
    (out / "points.txt").write_text(moo.format_front(points))
    (out / "front.txt").write_text(moo.format_front(front))
    for p in points:
        (out / f"trace_{p.start_id}.txt").write_text(moo.format_trace(p))
        write_mesh(starts[p.start_id].mesh.with_nodes(p.nodes), out / f"final_{p.start_id}.mesh")
    sys.stdout.write(moo.format_front(front))
    return 0


def cmd_export_vtk(args) -> int:
    mesh, cfg, problem = _load(args.mesh[0], args)
    if args.no_grad:
        st = solve(problem)
        U = st.U
        data = {}
    else:
        r = shape_gradient(problem)
        U = r.U
        data = {"dJ_dX": r.dJ_dX, "dPoF_dX": r.dPoF_dX}
    rep = _state_report(problem, U)
    point_data = {"displacement": U.reshape(mesh.nodes.shape), "von_mises": rep["von_mises"],
                  "log_Ndet": rep["life"]} | data
    out = _out_dir(args)
    path = out / (args.name or "model.vtk")
    write_vtk(path, mesh, point_data)
    print(path)
    return 0


def cmd_sample(args) -> int:
    """Write one of the built-in test geometries with a matching config."""
    mode = FIXED if args.fixed else FOLLOWER
    if args.shape == "rod":
        s = samples.bent_rod(cells=tuple(args.cells or (10, 2, 2)), kind=args.kind or "hex20",
                             height=args.height, mode=mode)
    elif args.shape == "rod2d":
        s = samples.rod2d(cells=tuple(args.cells or (16, 3)), kind=args.kind or "quad8",
                          height=args.height, mode=FIXED)
        if args.force is not None:
            t = s.loadcase.tractions[0]
            lc = replace(s.loadcase, tractions=(replace(t, resultant=np.array([args.force, 0.0])),))
            s = replace(s, loadcase=lc)
    elif args.shape == "wheel":
        s = samples.wheel_sector(n_sectors=args.sectors, cells=tuple(args.cells or (4, 6, 2)),
                                 kind=args.kind or "hex8")
    else:
        s = samples.bar(kind=args.kind or "hex8", mode=mode)
    out = _out_dir(args)
    name = args.name or args.shape
    write_mesh(s.mesh, out / f"{name}.mesh")
    (out / f"{name}.ini").write_text(format_config(s.material, s.loadcase))
    print(out / f"{name}.mesh")
    print(out / f"{name}.ini")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _env(key, cast=str):
    v = os.environ.get(ENV[key])
    if v is None or v == "":
        return None
    try:
        return cast(v)
    except ValueError:
        raise ConfigError(f"{ENV[key]}: bad value {v!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mesh", action="append", help="mesh file (repeat for several starts)")
    common.add_argument("--config", help="material/load/numerics config file")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, help="worker threads for element loops")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lcfshape", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="state solve, J, PoF, eta, minimum life")
    sub.add_parser("grad", parents=[common], help="adjoint shape gradient and stage timings")
    c = sub.add_parser("check-grad", parents=[common], help="finite-difference gradient check")
    c.add_argument("--scheme", choices=["central", "one-sided", "both"])
    c.add_argument("--directions", type=int)
    c.add_argument("--gate", type=float)
    c.add_argument("--flip-sign", action="store_true",
                   help="negate the adjoint gradient (negative control for the gate)")
    o = sub.add_parser("optimize", parents=[common], help="PoF/volume Pareto sweep")
    o.add_argument("--max-iter", type=int)
    o.add_argument("--snapshots", action="store_true", help="write every iterate as a mesh file")
    e = sub.add_parser("export-vtk", parents=[common], help="legacy VTK file with all fields")
    e.add_argument("--no-grad", action="store_true", help="skip the gradient fields")
    e.add_argument("--name", help="file name inside --out (default model.vtk)")
    s = sub.add_parser("sample", parents=[common], help="write a built-in test geometry")
    s.add_argument("shape", choices=["bar", "rod", "rod2d", "wheel"])
    s.add_argument("--kind")
    s.add_argument("--cells", type=int, nargs="+")
    s.add_argument("--height", type=float, default=4.0)
    s.add_argument("--sectors", type=int, default=4)
    s.add_argument("--fixed", action="store_true", help="fixed total force instead of follower")
    s.add_argument("--force", type=float, help="rod2d: total pulling force")
    s.add_argument("--name")
    return p


COMMANDS = {"solve": cmd_solve, "grad": cmd_grad, "check-grad": cmd_check_grad,
            "optimize": cmd_optimize, "export-vtk": cmd_export_vtk, "sample": cmd_sample}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.mesh is None:
            env_mesh = _env("mesh")
            args.mesh = [env_mesh] if env_mesh else [None]
        args.config = args.config or _env("config")
        args.out = args.out or _env("out") or "."
        if args.seed is None:
            env_seed = _env("seed", int)
            args.seed = DEFAULT_SEED if env_seed is None else env_seed
        args.threads = args.threads if args.threads is not None else _env("threads", int)
        return COMMANDS[args.command](args)
    except LCFShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
