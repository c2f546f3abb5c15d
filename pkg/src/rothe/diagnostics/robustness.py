"""Uniqueness and order checks for the implicit step solver."""

from __future__ import annotations

import numpy as np

from ..discretize import discretize
from ..driver import RotheSequence
from ..grid import GridFunction, StencilFrame
from ..operators import BellmanOperator
from ..step_solver import StepConfig, solve_step
from .report import CheckResult

__all__ = ["random_start_agreement", "method_agreement", "comparison_principle"]


def _disc(seq: RotheSequence):
    cfg = seq.config
    return discretize(seq.operator, seq.grid, frames=StencilFrame.named(cfg.frames, seq.grid),
                      mode=cfg.mode)


def random_start_agreement(seq: RotheSequence, starts: int = 20, seed: int = 0,
                           factor: float = 10.0, steps=None) -> CheckResult:
    """Re-solve steps from random initial iterates; all must agree with the stored one.

    Starts are ``z_n`` plus uniform noise of amplitude ``1 + ||z_n||``.
    ``measured`` is the largest sup-norm deviation; the bound is
    ``factor * tol`` with ``tol`` the solver's effective tolerance.
    """
    cfg = seq.config
    disc = _disc(seq)
    tol = seq.tolerance
    steps = range(seq.N) if steps is None else steps
    worst = 0.0
    methods: dict[str, int] = {}
    for n in steps:
        z_prev = seq.iterate(n)
        ref = seq.iterate(n + 1)
        rng = np.random.default_rng([seed, n])
        amp = 1.0 + z_prev.norm_inf()
        for _ in range(starts):
            init = GridFunction(seq.grid, z_prev.values + rng.uniform(-amp, amp, seq.grid.shape))
            z, rep = solve_step(seq.operator, z_prev, seq.h, (n + 1) * seq.h, cfg,
                                initial=init, discretization=disc)
            key = rep.method_used + ("<-" + rep.switched_from if rep.switched_from else "")
            methods[key] = methods.get(key, 0) + 1
            worst = max(worst, (z - ref).norm_inf())
    bound = factor * tol
    return CheckResult("random_starts", worst, bound, bound - worst,
                       details={"starts": starts, "steps": len(list(steps)), "methods": methods})


def method_agreement(seq: RotheSequence, factor: float = 10.0) -> CheckResult:
    """Newton and policy iteration from the same ``z_n`` agree at every step."""
    if not isinstance(seq.operator, BellmanOperator):
        raise TypeError("policy iteration applies to Bellman operators only")
    cfg = seq.config
    disc = _disc(seq)
    worst = 0.0
    for n in range(seq.N):
        z_prev = seq.iterate(n)
        t = (n + 1) * seq.h
        zn, _ = solve_step(seq.operator, z_prev, seq.h, t, cfg, method="newton",
                           discretization=disc)
        zp, _ = solve_step(seq.operator, z_prev, seq.h, t, cfg, method="policy_iteration",
                           discretization=disc)
        worst = max(worst, (zn - zp).norm_inf())
    bound = factor * seq.tolerance
    return CheckResult("newton_vs_policy", worst, bound, bound - worst,
                       details={"steps": seq.N})


def comparison_principle(F, grid, h: float, t: float, pairs: int = 50, seed: int = 0,
                         cfg: StepConfig = StepConfig(), scale: float = 1.0) -> CheckResult:
    """Ordered data give ordered step solutions.

    Draws ``a`` and ``b = a + |noise|``; solves one step from each and
    records the largest violation of ``z_a <= z_b``.
    """
    disc = discretize(F, grid, frames=StencilFrame.named(cfg.frames, grid), mode=cfg.mode)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        a = rng.uniform(-scale, scale, grid.shape)
        b = a + np.abs(rng.uniform(0.0, scale, grid.shape))
        za, _ = solve_step(F, GridFunction(grid, a), h, t, cfg, discretization=disc)
        zb, _ = solve_step(F, GridFunction(grid, b), h, t, cfg, discretization=disc)
        worst = max(worst, float(np.max(za.values - zb.values)))
    tol = 10.0 * cfg.effective_tolerance(h)
    return CheckResult("comparison", worst, 0.0, -worst, tol, details={"pairs": pairs, "h": h})
