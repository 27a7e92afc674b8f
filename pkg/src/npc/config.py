"""Run configuration: JSON schema, field expressions and problem assembly.

Field expressions form a small closed language evaluated on the grid:

    numbers, pi, x, y, t, + - * /, unary minus, parentheses,
    cos(e), sin(e), gauss(x0, s) (1D) or gauss(x0, y0, s) (2D)

``gauss`` is ``exp(-|p - p0|^2 / (2 s^2))``.  Anything else is rejected at
load time.  Instead of an expression a field may reference a CSV written by
:func:`npc.io.write_fields_csv` as ``"file:<path>:<column>"``.
"""
from __future__ import annotations

import ast
import dataclasses
import json
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cost import Betas, Targets
from .grid import GridSpec, SpaceTimeGrid, build_grid
from .nonlocal_ops import KernelSpec, NonlocalOperator
from .optimizer import ControlConstraints, ControlProblem, OptConfig, ProjectionConfig
from .physics import PotentialSpec
from .state import InitialData, SolverConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# -- expressions -------------------------------------------------------------

_FUNCS = {"cos": 1, "sin": 1, "gauss": (2, 3)}
_NAMES = ("x", "y", "t", "pi")
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


def _check_expr(node, where: str) -> None:
    if isinstance(node, ast.Expression):
        return _check_expr(node.body, where)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ConfigError(f"{where}: only numeric constants are allowed")
        return
    if isinstance(node, ast.Name):
        if node.id not in _NAMES:
            raise ConfigError(f"{where}: unknown name {node.id!r}")
        return
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check_expr(node.left, where)
        return _check_expr(node.right, where)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        return _check_expr(node.operand, where)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        arity = _FUNCS[node.func.id]
        ok = len(node.args) in (arity if isinstance(arity, tuple) else (arity,))
        if not ok or node.keywords:
            raise ConfigError(f"{where}: wrong arguments to {node.func.id}")
        for a in node.args:
            _check_expr(a, where)
        return
    raise ConfigError(f"{where}: unsupported syntax {ast.dump(node)[:40]}")


def parse_expr(text: str, where: str = "expression") -> ast.Expression:
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} ({exc.msg})") from None
    _check_expr(tree, where)
    return tree


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    args = [_eval(a, env) for a in node.args]
    name = node.func.id
    if name == "cos":
        return np.cos(args[0])
    if name == "sin":
        return np.sin(args[0])
    if len(args) == 2:
        x0, s = args
        r2 = (env["x"] - x0) ** 2
    else:
        x0, y0, s = args
        r2 = (env["x"] - x0) ** 2 + (env["y"] - y0) ** 2
    return np.exp(-r2 / (2.0 * s * s))


def eval_expr(text, st: SpaceTimeGrid | None, grid=None, where: str = "expression",
              base_dir: Path | None = None) -> np.ndarray:
    """Evaluate on the space-time grid (shape ``(nt+1, N)``), or on ``grid`` alone (shape ``(N,)``)."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if isinstance(text, str) and text.startswith("file:"):
        return _load_field(text, st, grid, where, base_dir)
    tree = parse_expr(text, where)
    g = grid if grid is not None else st.grid
    pts = g.points
    env = {"pi": math.pi, "x": pts[:, 0], "y": pts[:, 1] if g.dim > 1 else np.zeros(len(pts))}
    with np.errstate(all="ignore"):  # non-finite results are rejected below
        if st is None:
            env["t"] = 0.0
            out = np.broadcast_to(_eval(tree, env), (g.node_count,))
        else:
            env = {k: (v[None, :] if isinstance(v, np.ndarray) else v) for k, v in env.items()}
            env["t"] = st.times[:, None]
            out = np.broadcast_to(_eval(tree, env), st.shape)
    out = np.array(out, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ConfigError(f"{where}: expression {text!r} is not finite on the grid")
    return out


def _load_field(ref, st, grid, where, base_dir):
    from .io import read_fields_csv

    try:
        _, path, column = ref.split(":", 2)
    except ValueError:
        raise ConfigError(f"{where}: file reference must be 'file:<path>:<column>'") from None
    p = Path(path)
    if base_dir is not None and not p.is_absolute():
        p = base_dir / p
    if st is None:
        raise ConfigError(f"{where}: file references are only supported for space-time fields")
    try:
        fields = read_fields_csv(p, st)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    if column not in fields:
        raise ConfigError(f"{where}: column {column!r} not in {p}")
    return fields[column]


# -- schema ------------------------------------------------------------------

@dataclass(frozen=True)
class TimeSpec:
    T: float = 1.0
    nt: int = 128

    def __post_init__(self):
        if not self.T > 0 or self.nt < 1:
            raise ValueError("need T > 0 and nt >= 1")


@dataclass(frozen=True)
class FieldSpec:
    rho0: str = "0.5 + 0.2*cos(pi*x)"
    mu0: str = "0.5 + 0.3*cos(pi*x)*cos(pi*x)"


@dataclass(frozen=True)
class TargetSpec:
    rho_Q: str = "0.5"
    mu_Q: str = "0.5"


@dataclass(frozen=True)
class ConstraintSpec:
    u_max: str | None = "3"
    R: float | None = None


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    time: TimeSpec
    betas: Betas
    potential: PotentialSpec = PotentialSpec()
    kernel: KernelSpec = KernelSpec()
    initial: FieldSpec = FieldSpec()
    targets: TargetSpec = TargetSpec()
    constraints: ConstraintSpec = ConstraintSpec()
    control: str = "0"
    solver: SolverConfig = SolverConfig()
    optimizer: OptConfig = OptConfig()
    seed: int = 0
    output_dir: str = "out"


_REQUIRED = {RunConfig: ("grid", "time", "betas"), Betas: ("beta1", "beta2", "beta3")}


def _is_dataclass_type(tp) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _convert(tp, value, where):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, where)
    if _is_dataclass_type(tp):
        return from_dict(tp, value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        return tuple(_convert(args[0], v, f"{where}[{i}]") for i, v in enumerate(value))
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return repr(value)
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def from_dict(cls, data, where: str = "config"):
    """Build dataclass ``cls`` from a JSON object, rejecting unknown and missing fields."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field {unknown[0]!r}")
    for req in _REQUIRED.get(cls, ()):
        if req not in data:
            raise ConfigError(f"{where}.{req}: missing required field")
    kwargs = {k: _convert(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [to_dict(v) for v in obj]
    return obj


def loads(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_dict(RunConfig, data)


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    return loads(text)


def dumps(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2)


# -- assembly ----------------------------------------------------------------

@dataclass
class Problem:
    """Everything a run needs, assembled and validated."""

    config: RunConfig
    st: SpaceTimeGrid
    B: NonlocalOperator
    init: InitialData
    control: ControlProblem
    u0: np.ndarray

    @property
    def pot(self):
        return self.config.potential


def build_problem(cfg: RunConfig, base_dir: Path | None = None) -> Problem:
    try:
        grid = build_grid(cfg.grid)
        st = SpaceTimeGrid(grid, cfg.time.T, cfg.time.nt)
        B = NonlocalOperator(cfg.kernel, st)
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from None
    init = InitialData(eval_expr(cfg.initial.rho0, None, grid, "initial.rho0"),
                       eval_expr(cfg.initial.mu0, None, grid, "initial.mu0"))
    try:
        init.validate(grid.node_count)
    except ValueError as exc:
        raise ConfigError(f"initial: {exc}") from None
    targets = Targets(eval_expr(cfg.targets.rho_Q, st, where="targets.rho_Q", base_dir=base_dir),
                      eval_expr(cfg.targets.mu_Q, st, where="targets.mu_Q", base_dir=base_dir))
    u_max = None
    if cfg.constraints.u_max is not None:
        u_max = eval_expr(cfg.constraints.u_max, st, where="constraints.u_max", base_dir=base_dir)
    try:
        cons = ControlConstraints.on(st, u_max, cfg.constraints.R)
    except ValueError as exc:
        raise ConfigError(f"constraints: {exc}") from None
    u0 = eval_expr(cfg.control, st, where="control", base_dir=base_dir)
    prob = ControlProblem(st, cfg.potential, B, init, targets, cfg.betas, cons, cfg.solver)
    return Problem(cfg, st, B, init, prob, u0)


__all__ = ["ConfigError", "RunConfig", "TimeSpec", "FieldSpec", "TargetSpec", "ConstraintSpec",
           "ProjectionConfig", "parse_expr", "eval_expr", "from_dict", "to_dict", "load", "loads",
           "dumps", "build_problem", "Problem"]
