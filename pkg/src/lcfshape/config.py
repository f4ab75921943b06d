"""Load/config files: INI-style sections read with :mod:`configparser`.

Example::

    [material]
    E = 200000
    nu = 0.3
    K = 1100
    n_prime = 0.12
    sigma_f = 900
    b = -0.087
    eps_f = 0.6
    c = -0.58
    m = 4
    rho = 7.85e-9

    [load]
    omega = 0
    cycles_n = 1e4
    axis = 0, 0, 1
    traction.pull = face = 10,4 20,4; g = 60, 0, 0; mode = fixed

    [numerics]
    volume_order = 2
    face_order = 6

Face references are 1-based ``element,face`` pairs as in the mesh file. A
fixed-mode traction may give ``force = fx, fy, fz`` to set the resultant
directly instead of deriving it from ``g`` and the loaded area.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

import numpy as np

from .elasticity import FIXED, LoadCase, Material, Numerics, Traction
from .errors import ConfigError, ParseError
from .moo import DescentConfig

_MATERIAL_KEYS = [f.name for f in fields(Material)]
_NUMERIC_KEYS = {"volume_order": int, "face_order": int, "amplitude_factor": float,
                 "solver_tol": float, "workers": int}
_NUMERIC_ALIASES = {"volume_quadrature_order": "volume_order", "face_quadrature_order": "face_order",
                    "threads": "workers"}


@dataclass(frozen=True)
class CheckGradConfig:
    directions: int = 5
    steps: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)
    scheme: str = "central"
    gate: float = 1e-3


@dataclass
class RunConfig:
    material: Material
    loadcase: LoadCase
    numerics: Numerics = field(default_factory=Numerics)
    check_grad: CheckGradConfig = field(default_factory=CheckGradConfig)
    optimize: DescentConfig = field(default_factory=DescentConfig)


def _vector(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"{what}: expected numbers, got {text!r}") from None


def _float(section, key):
    try:
        return section.getfloat(key)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: not a number: {section[key]!r}") from None


def parse_traction(name: str, text: str) -> Traction:
    """``face = e,f e,f; g = gx,gy[,gz]; mode = follower|fixed[; force = ...]``"""
    parts = {}
    for item in text.split(";"):
        if not item.strip():
            continue
        if "=" not in item:
            raise ConfigError(f"traction {name}: expected key = value, got {item.strip()!r}")
        k, v = item.split("=", 1)
        parts[k.strip().lower()] = v.strip()
    unknown = set(parts) - {"face", "faces", "g", "mode", "force"}
    if unknown:
        raise ConfigError(f"traction {name}: unknown keys {sorted(unknown)}")
    faces_text = parts.get("face", parts.get("faces"))
    if faces_text is None or "g" not in parts and "force" not in parts:
        raise ConfigError(f"traction {name}: needs 'face' and 'g' (or 'force')")
    try:
        faces = np.array([[int(x) for x in pair.split(",")] for pair in faces_text.split()]) - 1
    except ValueError:
        raise ConfigError(f"traction {name}: bad face list {faces_text!r}") from None
    if faces.ndim != 2 or faces.shape[1] != 2:
        raise ConfigError(f"traction {name}: faces must be element,face pairs")
    mode = parts.get("mode", "follower")
    force = _vector(parts["force"], f"traction {name} force") if "force" in parts else None
    if force is not None and mode != FIXED:
        raise ConfigError(f"traction {name}: 'force' requires mode = fixed")
    g = _vector(parts["g"], f"traction {name} g") if "g" in parts else np.zeros_like(force)
    return Traction(faces, g, mode, force)


def parse_config(text: str, dim: int | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ParseError(f"cannot parse {line.strip()!r}", lineno) from None
    except configparser.Error as exc:
        raise ParseError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    if "material" not in cp:
        raise ConfigError("missing [material] section")
    sec = cp["material"]
    unknown = set(sec) - set(_MATERIAL_KEYS)
    if unknown:
        raise ConfigError(f"[material] unknown keys {sorted(unknown)}")
    missing = [k for k in _MATERIAL_KEYS if k != "rho" and k not in sec]
    if missing:
        raise ConfigError(f"[material] missing keys {missing}")
    material = Material(**{k: _float(sec, k) for k in sec})

    load = cp["load"] if "load" in cp else {}
    tractions = []
    kwargs = {}
    for key in load:
        if key.startswith("traction"):
            tractions.append(parse_traction(key.partition(".")[2] or key, load[key]))
        elif key in ("omega", "cycles_n"):
            kwargs[key] = _float(load, key)
        elif key == "axis":
            kwargs["axis"] = _vector(load[key], "axis")
        else:
            raise ConfigError(f"[load] unknown key {key!r}")
    if dim is not None:
        for t in tractions:
            if t.g.size != dim:
                raise ConfigError(f"traction vector has {t.g.size} components, mesh is {dim}D")
    loadcase = LoadCase(tuple(tractions), **kwargs)

    num = {}
    if "numerics" in cp:
        for raw_key in cp["numerics"]:
            key = _NUMERIC_ALIASES.get(raw_key, raw_key)
            if key not in _NUMERIC_KEYS:
                raise ConfigError(f"[numerics] unknown key {raw_key!r}")
            try:
                num[key] = _NUMERIC_KEYS[key](cp["numerics"][raw_key])
            except ValueError:
                raise ConfigError(f"[numerics] {raw_key}: bad value {cp['numerics'][raw_key]!r}") from None
    cg = {}
    if "check-grad" in cp:
        s = cp["check-grad"]
        for key in s:
            if key == "steps":
                cg["steps"] = tuple(_vector(s[key], "steps"))
            elif key == "directions":
                cg[key] = int(s[key])
            elif key == "scheme":
                cg[key] = s[key].strip()
            elif key == "gate":
                cg[key] = _float(s, key)
            else:
                raise ConfigError(f"[check-grad] unknown key {key!r}")
    opt = {}
    if "optimize" in cp:
        types = {f.name: f.type for f in fields(DescentConfig)}
        for key in cp["optimize"]:
            if key not in types:
                raise ConfigError(f"[optimize] unknown key {key!r}")
            raw = cp["optimize"][key]
            cast = {"int": int, "float": float}.get(str(types[key]), str)
            try:
                opt[key] = cast(raw)
            except ValueError:
                raise ConfigError(f"[optimize] {key}: bad value {raw!r}") from None
    try:
        return RunConfig(material, loadcase, Numerics(**num), CheckGradConfig(**cg), DescentConfig(**opt))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def read_config(path, dim: int | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, dim)


def _fmt_vec(v) -> str:
    return ", ".join(repr(float(x)) for x in np.ravel(v))


def format_config(material: Material, loadcase: LoadCase, numerics: Numerics | None = None) -> str:
    out = io.StringIO()
    out.write("[material]\n")
    for k in _MATERIAL_KEYS:
        out.write(f"{k} = {getattr(material, k)!r}\n")
    out.write(f"\n[load]\nomega = {loadcase.omega!r}\ncycles_n = {loadcase.cycles_n!r}\n")
    out.write(f"axis = {_fmt_vec(loadcase.axis)}\n")
    for i, t in enumerate(loadcase.tractions):
        faces = " ".join(f"{e + 1},{f + 1}" for e, f in t.faces)
        line = f"traction.t{i} = face = {faces}; g = {_fmt_vec(t.g)}; mode = {t.mode}"
        if t.resultant is not None:
            line += f"; force = {_fmt_vec(t.resultant)}"
        out.write(line + "\n")
    if numerics is not None:
        out.write("\n[numerics]\n")
        for k in _NUMERIC_KEYS:
            v = getattr(numerics, k)
            if v is not None:
                out.write(f"{k} = {v!r}\n")
    return out.getvalue()
