"""Discrete sup- and inf-convolutions and their semiconvexity check.

The maximization runs over every grid node, boundary nodes included (where
the function is zero). Results therefore live on the full node set; use
:meth:`NodalFunction.interior` to get back a :class:`GridFunction`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from ..grid import Grid, GridFunction
from .report import CheckResult, DiagnosticsReport

__all__ = ["NodalFunction", "sup_convolution", "inf_convolution", "semiconvexity_check",
           "convolution_suite"]

_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class NodalFunction:
    """Values on all nodes (boundary included), shape ``n_a + 2`` per axis."""

    grid: Grid
    values: np.ndarray

    def interior(self) -> GridFunction:
        sl = tuple(slice(1, -1) for _ in range(self.grid.dim))
        return GridFunction(self.grid, self.values[sl])

    def __getitem__(self, node):
        return float(self.values[tuple(node)])

    def __neg__(self):
        return NodalFunction(self.grid, -self.values)


def _as_full(u) -> tuple[Grid, np.ndarray]:
    if isinstance(u, NodalFunction):
        return u.grid, u.values
    return u.grid, u.full()


def _convolve(grid: Grid, full: np.ndarray, epsilon: float, sign: int) -> np.ndarray:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    pts = grid.all_points
    vals = full.reshape(-1)
    out = np.empty(len(pts))
    for start in range(0, len(pts), _CHUNK):
        x = pts[start:start + _CHUNK]
        d2 = np.sum((x[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        penalty = d2 / (2.0 * epsilon)
        if sign > 0:
            out[start:start + _CHUNK] = np.max(vals[None, :] - penalty, axis=1)
        else:
            out[start:start + _CHUNK] = np.min(vals[None, :] + penalty, axis=1)
    return out.reshape(full.shape)


def sup_convolution(u, epsilon: float) -> NodalFunction:
    """``u^eps(x) = max_y u(y) - |x - y|^2 / (2 eps)`` by exhaustive scan."""
    grid, full = _as_full(u)
    return NodalFunction(grid, _convolve(grid, full, epsilon, 1))


def inf_convolution(u, epsilon: float) -> NodalFunction:
    """``u_eps(x) = min_y u(y) + |x - y|^2 / (2 eps)``."""
    grid, full = _as_full(u)
    return NodalFunction(grid, _convolve(grid, full, epsilon, -1))


def _second_differences(grid: Grid, full: np.ndarray):
    """Yield ``(direction, |De|^2, second differences at interior nodes)``."""
    d = grid.dim
    dirs = [tuple(1 if i == a else 0 for i in range(d)) for a in range(d)]
    if d >= 2:
        dirs += [e for e in product((-1, 0, 1), repeat=d)
                 if sum(abs(c) for c in e) >= 2 and next(c for c in e if c) > 0]
    inner = tuple(slice(1, -1) for _ in range(d))
    for e in dirs:
        plus = tuple(slice(1 + c, full.shape[i] - 1 + c) for i, c in enumerate(e))
        minus = tuple(slice(1 - c, full.shape[i] - 1 - c) for i, c in enumerate(e))
        le2 = sum((c * hc) ** 2 for c, hc in zip(e, grid.spacing))
        yield e, le2, (full[plus] - 2.0 * full[inner] + full[minus]) / le2


def semiconvexity_check(u_eps: NodalFunction, epsilon: float,
                        u: GridFunction | NodalFunction | None = None,
                        coarser: NodalFunction | None = None) -> CheckResult:
    """Every directional second difference of ``u_eps`` is ``>= -1/eps - slack``.

    ``u_eps + |x|^2/(2 eps)`` is a maximum of affine functions, so its
    second differences are nonnegative in exact arithmetic and the slack
    is a rounding budget: ``C_s dx`` with ``C_s dx = 16 machine-eps
    (max|u_eps| + diam^2/(2 eps)) / |De|^2``. When ``u`` is given also
    checks ``u_eps >= u`` nodewise; when ``coarser`` (the sup-convolution
    at a larger epsilon) is given, checks ``coarser >= u_eps`` nodewise.
    """
    grid = u_eps.grid
    full = u_eps.values
    diam2 = sum((b - a) ** 2 for a, b in grid.extents)
    scale = float(np.max(np.abs(full))) + diam2 / (2.0 * epsilon)
    worst = math.inf
    violations = 0
    slack_max = 0.0
    dx = min(grid.spacing)
    for e, le2, s in _second_differences(grid, full):
        if not s.size:
            continue
        slack = 16.0 * np.finfo(float).eps * scale / le2
        slack_max = max(slack_max, slack)
        margin = s + 1.0 / epsilon
        violations += int(np.sum(margin < -slack))
        worst = min(worst, float(np.min(margin)))
    if worst == math.inf:
        worst = 0.0
    details = {"epsilon": epsilon, "violations": violations, "C_s": slack_max / dx,
               "min_second_difference": worst - 1.0 / epsilon}
    margin = worst
    if u is not None:
        _, ufull = _as_full(u)
        below = float(np.min(full - ufull))
        details["min_excess_over_u"] = below
        margin = min(margin, below + slack_max) if below < 0 else margin
    if coarser is not None:
        mono = float(np.min(coarser.values - full))
        details["min_monotonicity_gap"] = mono
        margin = min(margin, mono + slack_max) if mono < 0 else margin
    return CheckResult("semiconvexity", worst - 1.0 / epsilon, -1.0 / epsilon, margin,
                       slack_max, details=details)


def convolution_suite(samples: int, grid: Grid, epsilons=(0.5, 0.1, 0.02),
                      seed: int = 0) -> DiagnosticsReport:
    """Exact properties of the convolutions on random grid functions.

    Counts violations of ``u^eps >= u``, monotonicity in ``eps``, the
    duality ``inf(u) = -sup(-u)`` (bitwise) and the semiconvexity bound.
    """
    rng = np.random.default_rng(seed)
    eps = sorted(epsilons, reverse=True)
    counts = {"above": 0, "monotone": 0, "duality": 0, "semiconvex": 0}
    for _ in range(samples):
        u = GridFunction(grid, rng.uniform(-1.0, 1.0, grid.shape))
        prev = None
        for e in eps:
            sup = sup_convolution(u, e)
            inf = inf_convolution(u, e)
            neg = sup_convolution(-u, e)
            chk = semiconvexity_check(sup, e)
            counts["semiconvex"] += chk.details["violations"]
            counts["above"] += int(np.sum(sup.values < u.full()))
            counts["duality"] += int(np.sum(inf.values != -neg.values))
            if prev is not None:
                counts["monotone"] += int(np.sum(prev.values < sup.values))
            prev = sup
    rep = DiagnosticsReport()
    for key, n in counts.items():
        rep.add(CheckResult(f"convolution_{key}", n, 0, -n, 0.0,
                            details={"samples": samples, "epsilons": tuple(eps)}))
    return rep
