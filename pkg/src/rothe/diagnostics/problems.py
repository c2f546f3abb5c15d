"""Catalog of test problems with known behavior.

``P1_linear_1d`` has a closed-form solution; the others are checked through
properties only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..grid import Grid
from ..operators import (
    BellmanOperator, Control, EllipticOperator, Forcing, LinearOperator, PucciOperator,
)

__all__ = ["TestProblem", "manufactured_problem", "PROBLEMS", "residual_probe"]

PI = math.pi

DEFAULT_LADDER = (0.1, 0.05, 0.025, 0.0125)


@dataclass
class TestProblem:
    """Operator plus the grid, ladder and horizon it is meant to be run with."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    operator: EllipticOperator
    grid: Grid
    description: str
    exact_solution: Callable | None = None
    h_list: tuple[float, ...] = DEFAULT_LADDER
    horizon: float = 1.0
    extra: dict = field(default_factory=dict)

    def exact_on_grid(self, grid: Grid, t: float) -> np.ndarray:
        if self.exact_solution is None:
            raise ValueError(f"{self.name} has no exact solution")
        return self.exact_solution(grid.points, t).reshape(grid.shape)


def residual_probe(problem: TestProblem, points: np.ndarray, times, step: float = 1e-3):
    """``u_t + F(D^2u, Du, u, x, t)`` of the exact solution, by fourth-order differences.

    Returns the largest absolute value over all probe points and times.
    """
    u = problem.exact_solution
    F = problem.operator
    d = F.dim
    worst = 0.0
    coef1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
    coef2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
    offs = np.arange(-2, 3)
    for t in times:
        for x in np.atleast_2d(points):
            def at(dx, dt=0.0):
                return float(u((x + dx)[None, :], t + dt)[0])

            ut = sum(c * at(np.zeros(d), o * step) for c, o in zip(coef1, offs)) / step
            grad = np.zeros(d)
            hess = np.zeros((d, d))
            for a in range(d):
                ea = np.eye(d)[a] * step
                grad[a] = sum(c * at(o * ea) for c, o in zip(coef1, offs)) / step
                hess[a, a] = sum(c * at(o * ea) for c, o in zip(coef2, offs)) / step ** 2
                for b in range(a + 1, d):
                    eb = np.eye(d)[b] * step
                    hess[a, b] = hess[b, a] = (at(ea + eb) - at(ea - eb) - at(-ea + eb)
                                               + at(-ea - eb)) / (4 * step ** 2)
            val = ut + F.evaluate(hess, grad, at(np.zeros(d)), x, t)
            worst = max(worst, abs(val))
    return worst


def _p1() -> TestProblem:
    forcing = Forcing(lambda x, t: -(1.0 + PI ** 2 * t) * np.sin(PI * x[:, 0]),
                      sigma2=lambda h: PI ** 2 * h,
                      description="-(1 + pi**2*t)*sin(pi*x)")
    F = LinearOperator([[1.0]], forcing=forcing)
    return TestProblem(
        "P1_linear_1d", F, Grid.interval(63),
        "heat equation with exact solution t*sin(pi x)",
        exact_solution=lambda x, t: t * np.sin(PI * np.atleast_2d(x)[:, 0]),
    )


P2_AMPLITUDE = 8.0


def _p2(time_independent: bool = False, nodes: int = 63) -> TestProblem:
    A = P2_AMPLITUDE
    if time_independent:
        forcing = Forcing(lambda x, t: -A * np.sin(PI * x[:, 0]), time_independent=True,
                          sigma2=lambda h: 0.0, description=f"-{A}*sin(pi*x)")
        name = "P2_pucci_1d_steady"
    else:
        forcing = Forcing(lambda x, t: -(1.0 + t) * A * np.sin(PI * x[:, 0]),
                          sigma2=lambda h: A * h, description=f"-(1 + t)*{A}*sin(pi*x)")
        name = "P2_pucci_1d"
    F = PucciOperator(1.0, 2.0, sign=1, gamma=0.5, forcing=forcing)
    return TestProblem(name, F, Grid.interval(nodes),
                       "maximal Pucci operator with gradient term, lam=1, Lam=2, gamma=0.5")


def _p3() -> TestProblem:
    def f1(x, t):
        return -(1.0 + t) * 4.0 * np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1])

    def f2(x, t):
        return -(2.0 + t) * 16.0 * x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1])

    c1 = Control.make([[1.0, 0.25], [0.25, 0.8]], [0.5, 0.0], 0.5,
                      Forcing(f1, sigma2=lambda h: 4.0 * h,
                              description="-(1 + t)*4*sin(pi*x)*sin(pi*y)"))
    c2 = Control.make([[0.6, -0.2], [-0.2, 1.0]], [0.0, -0.5], 0.0,
                      Forcing(f2, sigma2=lambda h: h,
                              description="-(2 + t)*16*x*(1 - x)*y*(1 - y)"))
    F = BellmanOperator([c1, c2], "sup")
    return TestProblem("P3_bellman_2d", F, Grid.rectangle(15, 15),
                       "sup of two linear controls with drift and discount on the unit square")


def _single_node() -> TestProblem:
    F = LinearOperator([[1.0]], forcing=Forcing.constant(1.0))
    return TestProblem("single_node", F, Grid.interval(1),
                       "F(M) = -M + 1 on one interior node; z_1 = -h/(8h + 1)",
                       h_list=(0.1, 0.05, 0.025, 0.0125), horizon=0.2)


def _zero() -> TestProblem:
    F = LinearOperator([[1.0]], forcing=Forcing.zero())
    return TestProblem("zero", F, Grid.interval(15), "heat operator without forcing",
                       exact_solution=lambda x, t: np.zeros(len(np.atleast_2d(x))))


PROBLEMS: dict[str, Callable[[], TestProblem]] = {
    "P1_linear_1d": _p1,
    "P2_pucci_1d": _p2,
    "P2_pucci_1d_steady": lambda: _p2(time_independent=True),
    "P3_bellman_2d": _p3,
    "single_node": _single_node,
    "zero": _zero,
}


def manufactured_problem(name: str, **kwargs) -> TestProblem:
    """Look up a catalog problem; ``P2`` variants accept ``nodes=``."""
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(PROBLEMS)}") from None
    if kwargs:
        if not name.startswith("P2"):
            raise TypeError(f"{name} takes no options")
        return _p2(time_independent=name.endswith("steady"), **kwargs)
    return factory()
