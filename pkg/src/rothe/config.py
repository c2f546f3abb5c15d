"""INI run configuration.

Example::

    [run]
    seed = 0
    output_dir = out/p1
    diagnostics = first_step, increments, lipschitz, gronwall, touching

    [problem]
    name = P1_linear_1d

    [grid]
    nodes = 63

    [time]
    horizon = 1.0
    h0 = 0.1
    levels = 4

Instead of ``name`` the ``[problem]`` section may give ``operator``
(``linear``, ``pucci_plus``, ``pucci_minus``, ``bellman``) with its
coefficients; Bellman controls go in ``[control.1]``, ``[control.2]``, ...
Initial and boundary data are always zero and cannot be configured.

Parsing is strict: unknown sections or keys are errors. ``serialize``
writes every field explicitly, so ``parse(serialize(c)) == c``.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from .diagnostics.problems import PROBLEMS, TestProblem, manufactured_problem
from .grid import Grid
from .operators import Control, EllipticOperator, Forcing, make_operator
from .step_solver import StepConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "serialize_config",
           "DIAGNOSTICS"]

DIAGNOSTICS = ("first_step", "increments", "lipschitz", "gronwall", "sandwich",
               "convolution", "touching", "robustness")
OPERATORS = ("linear", "pucci_plus", "pucci_minus", "bellman")
FORBIDDEN = ("initial", "initial_data", "boundary", "boundary_data", "u0", "g")


class ConfigError(ValueError):
    """Invalid configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class RunConfig:
    # [run]
    seed: int = 0
    output_dir: str = "out"
    diagnostics: tuple[str, ...] = DIAGNOSTICS[:-1]
    candidate_scale: float = 1.0
    max_workers: int = 1
    snapshot_times: tuple[float, ...] = ()
    thin: int = 1
    trials: int = 200
    # [problem]
    problem: str | None = None
    operator: str | None = None
    coefficients: tuple[tuple[str, str], ...] = ()
    controls: tuple[tuple[tuple[str, str], ...], ...] = ()
    # [grid]
    extents: tuple[tuple[float, float], ...] = ((0.0, 1.0),)
    nodes: tuple[int, ...] = (63,)
    frames: str = "narrow"
    mode: str = "monotone"
    # [solver]
    tolerance: float = 1e-10
    max_newton_iters: int = 50
    max_pseudo_time_iters: int = 500_000
    damping: float = 1.0
    fd_epsilon: float = 1e-7
    method: str = "auto"
    # [time]
    horizon: float = 1.0
    h_values: tuple[float, ...] = (0.1, 0.05, 0.025, 0.0125)

    # -- derived objects ---------------------------------------------------

    @property
    def grid(self) -> Grid:
        return Grid(self.extents, self.nodes)

    @property
    def step_config(self) -> StepConfig:
        return StepConfig(tolerance=self.tolerance, max_newton_iters=self.max_newton_iters,
                          max_pseudo_time_iters=self.max_pseudo_time_iters,
                          damping=self.damping, fd_epsilon=self.fd_epsilon,
                          mode=self.mode, frames=self.frames)

    def test_problem(self) -> TestProblem | None:
        return manufactured_problem(self.problem) if self.problem else None

    def build_operator(self) -> EllipticOperator:
        if self.problem:
            return manufactured_problem(self.problem).operator
        dim = len(self.nodes)
        coeffs = dict(self.coefficients)
        kw: dict[str, Any] = {"dim": dim}
        for key, val in coeffs.items():
            kw[key] = _coefficient(key, val, dim)
        if self.operator == "bellman":
            kw["controls"] = [_control(dict(c), dim) for c in self.controls]
            kw.pop("dim")
        return make_operator(self.operator, **kw)

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None,
                       levels: int | None = None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        if levels is not None:
            if levels < 1:
                raise ConfigError("--levels must be >= 1")
            hs = list(cfg.h_values[:levels])
            while len(hs) < levels:
                hs.append(hs[-1] / 2)
            cfg = replace(cfg, h_values=tuple(hs))
        validate(cfg)
        return cfg


# ---------------------------------------------------------------------------
# value parsing


def _floats(text: str, sep: str = ",") -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(sep) if p.strip()]
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"expected numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"expected integers, got {text!r}") from None


def _matrix(text: str) -> np.ndarray:
    rows = [_floats(r) for r in text.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"ragged matrix {text!r}")
    return np.array(rows)


def _coefficient(key: str, val: str, dim: int):
    if key == "A":
        return _matrix(val)
    if key == "b":
        return np.array(_floats(val))
    if key == "forcing":
        return Forcing.from_expression(val, dim)
    if key == "combiner":
        return val
    try:
        return float(val)
    except ValueError:
        raise ConfigError(f"coefficient {key} must be a number, got {val!r}") from None


_CONTROL_KEYS = ("A", "b", "c", "forcing")
_OPERATOR_KEYS = {
    "linear": ("A", "b", "c", "forcing"),
    "pucci_plus": ("lam", "Lam", "gamma", "c", "forcing"),
    "pucci_minus": ("lam", "Lam", "gamma", "c", "forcing"),
    "bellman": ("combiner", "lam", "Lam"),
}


def _control(items: dict, dim: int) -> Control:
    kw = {k: _coefficient(k, v, dim) for k, v in items.items()}
    if "A" not in kw:
        raise ConfigError("every control needs A")
    return Control.make(**kw)


def _fmt_float(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# parse / serialize


def _get(sec, key, conv, default):
    if key not in sec:
        return default
    try:
        return conv(sec[key])
    except ConfigError:
        raise
    except (TypeError, ValueError):
        raise ConfigError(f"[{sec.name}] {key}: cannot parse {sec[key]!r}") from None


def _check_keys(sec, allowed):
    for key in sec:
        if key in FORBIDDEN:
            raise ConfigError(f"[{sec.name}] {key}: initial and boundary data are fixed to zero")
        if key not in allowed:
            raise ConfigError(f"[{sec.name}] unknown key {key!r}")


def _names(text):
    return tuple(p.strip() for p in text.split(",") if p.strip())


def parse_config(text: str) -> RunConfig:
    """Parse INI text into a validated :class:`RunConfig`."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str  # keep 'Lam' distinct from 'lam'
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    known = {"run", "problem", "grid", "solver", "time"}
    for name in cp.sections():
        if name not in known and not name.startswith("control."):
            raise ConfigError(f"unknown section [{name}]")
    empty = {}
    run = cp["run"] if cp.has_section("run") else None
    kw: dict[str, Any] = {}
    if run is not None:
        _check_keys(run, ("seed", "output_dir", "diagnostics", "candidate_scale", "max_workers",
                          "snapshot_times", "thin", "trials"))
        kw["seed"] = _get(run, "seed", int, 0)
        kw["output_dir"] = run.get("output_dir", "out").strip()
        if "diagnostics" in run:
            kw["diagnostics"] = _names(run["diagnostics"])
        kw["candidate_scale"] = _get(run, "candidate_scale", float, 1.0)
        kw["max_workers"] = _get(run, "max_workers", int, 1)
        kw["snapshot_times"] = _get(run, "snapshot_times", _floats, ())
        kw["thin"] = _get(run, "thin", int, 1)
        kw["trials"] = _get(run, "trials", int, 200)

    if not cp.has_section("problem"):
        raise ConfigError("missing [problem] section")
    prob = cp["problem"]
    problem_default: TestProblem | None = None
    if "name" in prob:
        _check_keys(prob, ("name",))
        name = prob["name"].strip()
        if name not in PROBLEMS:
            raise ConfigError(f"unknown problem {name!r}; known: {sorted(PROBLEMS)}")
        kw["problem"] = name
        problem_default = manufactured_problem(name)
    else:
        if "operator" not in prob:
            raise ConfigError("[problem] needs 'name' or 'operator'")
        op = prob["operator"].strip()
        if op not in OPERATORS:
            raise ConfigError(f"unknown operator {op!r}; known: {OPERATORS}")
        _check_keys(prob, ("operator",) + _OPERATOR_KEYS[op])
        kw["operator"] = op
        kw["coefficients"] = tuple(sorted((k, prob[k].strip()) for k in prob if k != "operator"))
        controls = []
        names = sorted((s for s in cp.sections() if s.startswith("control.")),
                       key=lambda s: _control_index(s))
        for s in names:
            _check_keys(cp[s], _CONTROL_KEYS)
            controls.append(tuple(sorted((k, cp[s][k].strip()) for k in cp[s])))
        if op == "bellman" and not controls:
            raise ConfigError("bellman operator needs [control.N] sections")
        if op != "bellman" and controls:
            raise ConfigError("[control.N] sections only apply to the bellman operator")
        kw["controls"] = tuple(controls)

    grid_sec = cp["grid"] if cp.has_section("grid") else empty
    if grid_sec:
        _check_keys(grid_sec, ("nodes", "extent", "frames", "mode"))
    if problem_default is not None:
        kw["extents"] = problem_default.grid.extents
        kw["nodes"] = problem_default.grid.nodes
    if "nodes" in grid_sec:
        kw["nodes"] = _get(grid_sec, "nodes", _ints, None)
    if "extent" in grid_sec:
        kw["extents"] = tuple(_floats(p) for p in grid_sec["extent"].split(";"))
    elif "nodes" in grid_sec and problem_default is None:
        kw["extents"] = ((0.0, 1.0),) * len(kw["nodes"])
    for key in ("frames", "mode"):
        if key in grid_sec:
            kw[key] = grid_sec[key].strip()

    if cp.has_section("solver"):
        sol = cp["solver"]
        _check_keys(sol, ("tolerance", "max_newton_iters", "max_pseudo_time_iters", "damping",
                          "fd_epsilon", "method"))
        for key, conv in (("tolerance", float), ("max_newton_iters", int),
                          ("max_pseudo_time_iters", int), ("damping", float),
                          ("fd_epsilon", float)):
            if key in sol:
                kw[key] = _get(sol, key, conv, None)
        if "method" in sol:
            kw["method"] = sol["method"].strip()

    if problem_default is not None:
        kw["horizon"] = problem_default.horizon
        kw["h_values"] = problem_default.h_list
    if cp.has_section("time"):
        tm = cp["time"]
        _check_keys(tm, ("horizon", "h", "h0", "levels"))
        if "horizon" in tm:
            kw["horizon"] = _get(tm, "horizon", float, None)
        if "h" in tm and ("h0" in tm or "levels" in tm):
            raise ConfigError("[time] give either 'h' or 'h0' + 'levels'")
        if "h" in tm:
            kw["h_values"] = _get(tm, "h", _floats, None)
        elif "h0" in tm or "levels" in tm:
            if not ("h0" in tm and "levels" in tm):
                raise ConfigError("[time] 'h0' and 'levels' go together")
            h0 = _get(tm, "h0", float, None)
            levels = _get(tm, "levels", int, None)
            if levels < 1:
                raise ConfigError("[time] levels must be >= 1")
            kw["h_values"] = tuple(h0 * 0.5 ** k for k in range(levels))
    cfg = RunConfig(**kw)
    validate(cfg)
    return cfg


def _control_index(section: str) -> int:
    try:
        return int(section.split(".", 1)[1])
    except ValueError:
        raise ConfigError(f"control sections are named [control.N], got [{section}]") from None


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical INI text with every field written out."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    cp["run"] = {
        "seed": str(cfg.seed),
        "output_dir": cfg.output_dir,
        "diagnostics": ", ".join(cfg.diagnostics),
        "candidate_scale": _fmt_float(cfg.candidate_scale),
        "max_workers": str(cfg.max_workers),
        "snapshot_times": ", ".join(_fmt_float(t) for t in cfg.snapshot_times),
        "thin": str(cfg.thin),
        "trials": str(cfg.trials),
    }
    if cfg.problem:
        cp["problem"] = {"name": cfg.problem}
    else:
        cp["problem"] = {"operator": cfg.operator, **dict(cfg.coefficients)}
        for i, ctrl in enumerate(cfg.controls, start=1):
            cp[f"control.{i}"] = dict(ctrl)
    cp["grid"] = {
        "nodes": ", ".join(str(n) for n in cfg.nodes),
        "extent": "; ".join(f"{_fmt_float(a)}, {_fmt_float(b)}" for a, b in cfg.extents),
        "frames": cfg.frames,
        "mode": cfg.mode,
    }
    cp["solver"] = {
        "tolerance": _fmt_float(cfg.tolerance),
        "max_newton_iters": str(cfg.max_newton_iters),
        "max_pseudo_time_iters": str(cfg.max_pseudo_time_iters),
        "damping": _fmt_float(cfg.damping),
        "fd_epsilon": _fmt_float(cfg.fd_epsilon),
        "method": cfg.method,
    }
    cp["time"] = {
        "horizon": _fmt_float(cfg.horizon),
        "h": ", ".join(_fmt_float(h) for h in cfg.h_values),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def validate(cfg: RunConfig) -> None:
    """Check every field against the preconditions of the library calls."""
    if not cfg.h_values:
        raise ConfigError("need at least one time step h")
    for h in cfg.h_values:
        if not (math.isfinite(h) and 0 < h <= 1):
            raise ConfigError(f"time step must satisfy 0 < h <= 1, got {h}")
    if any(b >= a for a, b in zip(cfg.h_values, cfg.h_values[1:])):
        raise ConfigError("time steps must be strictly decreasing")
    if not (math.isfinite(cfg.horizon) and cfg.horizon > 0):
        raise ConfigError("horizon must be positive")
    if len(cfg.nodes) not in (1, 2) or len(cfg.extents) != len(cfg.nodes):
        raise ConfigError("grid must be 1D or 2D with one extent per axis")
    if any(n < 1 for n in cfg.nodes):
        raise ConfigError("need at least one interior node per axis")
    if any(not b > a for a, b in cfg.extents):
        raise ConfigError("each extent must satisfy a < b")
    if cfg.frames not in ("narrow", "wide"):
        raise ConfigError(f"frames must be 'narrow' or 'wide', got {cfg.frames!r}")
    if cfg.mode not in ("monotone", "centered"):
        raise ConfigError(f"mode must be 'monotone' or 'centered', got {cfg.mode!r}")
    if cfg.method not in ("auto", "newton", "policy_iteration", "pseudo_time"):
        raise ConfigError(f"unknown solver method {cfg.method!r}")
    unknown = set(cfg.diagnostics) - set(DIAGNOSTICS)
    if unknown:
        raise ConfigError(f"unknown diagnostics {sorted(unknown)}; known: {DIAGNOSTICS}")
    for t in cfg.snapshot_times:
        if not 0 <= t <= cfg.horizon:
            raise ConfigError(f"snapshot time {t} outside [0, horizon]")
    if cfg.max_workers < 1 or cfg.thin < 1 or cfg.trials < 1:
        raise ConfigError("max_workers, thin and trials must be >= 1")
    if not cfg.candidate_scale > 0:
        raise ConfigError("candidate_scale must be positive")
    try:
        cfg.step_config
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.problem is None and cfg.operator is None:
        raise ConfigError("no problem or operator given")
    try:
        F = cfg.build_operator()
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, SyntaxError) as exc:
        raise ConfigError(f"invalid operator: {exc}") from None
    if F.dim != len(cfg.nodes):
        raise ConfigError(f"operator dimension {F.dim} does not match the grid")
    if cfg.method == "policy_iteration" and cfg.operator != "bellman" and not (
            cfg.problem and cfg.problem.startswith("P3")):
        raise ConfigError("policy_iteration requires a Bellman operator")
