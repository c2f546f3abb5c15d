"""Numerical checks of the estimates behind the Rothe scheme."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..operators import BellmanOperator
from .bounds import (
    LADDER_SPREAD, consistency_constant, first_step_bounds, first_step_ladder, gronwall_bound,
    gronwall_recursion, increment_report, lipschitz_in_time, lipschitz_ladder,
    pucci_sandwich_check, pucci_sandwich_report,
)
from .convolution import (
    NodalFunction, convolution_suite, inf_convolution, semiconvexity_check, sup_convolution,
)
from .problems import PROBLEMS, TestProblem, manufactured_problem, residual_probe
from .report import CheckResult, DiagnosticsReport, ratio_spread
from .robustness import comparison_principle, method_agreement, random_start_agreement
from .touching import viscosity_touch_test

__all__ = [
    "CheckResult", "DiagnosticsReport", "TestProblem", "NodalFunction", "PROBLEMS",
    "first_step_bounds", "first_step_ladder", "increment_report", "lipschitz_in_time",
    "lipschitz_ladder", "gronwall_bound", "gronwall_recursion", "gronwall_self_test",
    "pucci_sandwich_check", "pucci_sandwich_report", "consistency_constant",
    "sup_convolution", "inf_convolution", "semiconvexity_check", "convolution_suite",
    "viscosity_touch_test", "manufactured_problem", "residual_probe",
    "random_start_agreement", "method_agreement", "comparison_principle",
    "run_diagnostics", "ratio_spread", "LADDER_SPREAD",
]


def random_gronwall_instance(rng: np.random.Generator, max_len: int = 50):
    """Nonnegative rational ``(v0, B, D)`` with length in ``0..max_len``."""
    n = int(rng.integers(0, max_len + 1))

    def q():
        return Fraction(int(rng.integers(0, 1000)), int(rng.integers(1, 1000)))

    return q(), [q() for _ in range(n)], [q() for _ in range(n)]


def gronwall_self_test(instances: int = 1000, seed: int = 0, max_len: int = 50) -> CheckResult:
    """Closed form versus recursion on random rational instances; counts mismatches."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(instances):
        v0, B, D = random_gronwall_instance(rng, max_len)
        if gronwall_bound(v0, B, D) != gronwall_recursion(v0, B, D):
            mismatches += 1
    return CheckResult("gronwall", mismatches, 0, -mismatches, 0.0,
                       details={"instances": instances, "max_len": max_len})


def run_diagnostics(ladder, names, seed: int = 0, candidate_scale: float = 1.0,
                    trials: int = 200) -> DiagnosticsReport:
    """Run the named checks on a refinement ladder.

    Per-level checks (increments) run on every level; the sandwich, touching
    and convolution checks use the finest level; solver robustness uses the
    coarsest level to keep the cost down.
    """
    rep = DiagnosticsReport()
    levels = ladder.levels
    finest = ladder.finest
    rng = np.random.default_rng(seed)
    for name in names:
        if name == "first_step":
            if len(levels) > 1:
                rep.add(first_step_ladder(ladder))
            for s in levels:
                c = first_step_bounds(s)
                c.name = f"first_step[h={s.h:g}]"
                rep.add(c)
        elif name == "increments":
            for s in levels:
                if s.N >= 2:
                    c = increment_report(s)
                    c.name = f"increments[h={s.h:g}]"
                    rep.add(c)
        elif name == "lipschitz":
            if len(levels) > 1:
                rep.add(lipschitz_ladder(ladder))
            for s in levels:
                c = lipschitz_in_time(s)
                c.name = f"lipschitz[h={s.h:g}]"
                rep.add(c)
        elif name == "gronwall":
            rep.add(gronwall_self_test(seed=seed))
        elif name == "sandwich":
            k = min(5, finest.N)
            steps = sorted(int(n) for n in rng.choice(finest.N, size=k, replace=False))
            rep.extend(pucci_sandwich_report(finest, steps))
        elif name == "convolution":
            rep.extend(convolution_suite(20, finest.grid, seed=seed))
            zN = finest.iterate(finest.N)
            for eps in (0.1, 0.01):
                c = semiconvexity_check(sup_convolution(zN, eps), eps, u=zN)
                c.name = f"semiconvexity[eps={eps:g}]"
                rep.add(c)
        elif name == "touching":
            rep.add(viscosity_touch_test(finest, trials, seed, candidate_scale=candidate_scale))
        elif name == "robustness":
            coarse = levels[0]
            rep.add(random_start_agreement(coarse, seed=seed))
            rep.add(comparison_principle(coarse.operator, coarse.grid, coarse.h, coarse.h,
                                         seed=seed, cfg=coarse.config))
            if isinstance(coarse.operator, BellmanOperator):
                rep.add(method_agreement(coarse))
        else:
            raise ValueError(f"unknown diagnostic {name!r}")
    return rep
