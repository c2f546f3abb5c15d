"""Solvers for one implicit step ``F_h(z) + z/h = z_prev/h``.

Three methods share one residual:

* semismooth Newton with frozen active branches and backtracking
  (fast path, :func:`newton`);
* Howard policy iteration for Bellman operators (:func:`policy_iteration`);
* explicit pseudo-time relaxation with a contractive step, which always
  converges for monotone schemes (:func:`pseudo_time_relaxation`).

:func:`solve_step` runs Newton and falls back to relaxation when Newton
stalls; the report records the switch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import BellmanDiscretization, DiscreteOperator, discretize
from .grid import GridFunction, StencilFrame
from .operators import BellmanOperator, EllipticOperator

__all__ = [
    "StepConfig",
    "StepSolveReport",
    "NonConvergence",
    "solve_step",
    "newton",
    "policy_iteration",
    "pseudo_time_relaxation",
    "step_residual",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepConfig:
    """Nonlinear solver settings.

    ``tolerance`` is the base sup-norm residual target; with
    ``scale_tolerance`` the effective target is ``tolerance * (1 + 1/h)``
    because the residual carries a ``1/h`` term.
    """

    tolerance: float = 1e-10
    scale_tolerance: bool = True
    max_newton_iters: int = 50
    max_pseudo_time_iters: int = 500_000
    damping: float = 1.0
    fd_epsilon: float = 1e-7
    mode: str = "monotone"
    frames: str = "narrow"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_newton_iters < 1 or self.max_pseudo_time_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not self.fd_epsilon > 0:
            raise ValueError("fd_epsilon must be positive")

    def effective_tolerance(self, h: float) -> float:
        return self.tolerance * (1.0 + 1.0 / h) if self.scale_tolerance else self.tolerance


@dataclass
class StepSolveReport:
    method_used: str
    iterations: int
    final_residual_norm: float
    converged: bool
    tolerance: float
    switched_from: str | None = None
    notes: list[str] = field(default_factory=list)


class NonConvergence(RuntimeError):
    """Raised when every method exhausted its iteration cap.

    Carries the best iterate found and the report; the driver adds the step
    (and ladder level) index.
    """

    def __init__(self, message, best: GridFunction, report: StepSolveReport,
                 step: int | None = None, level: int | None = None, partial=None):
        super().__init__(message)
        self.best = best
        self.report = report
        self.step = step
        self.level = level
        self.partial = partial


def _disc(F, grid, cfg: StepConfig, discretization):
    if discretization is not None:
        return discretization
    frames = StencilFrame.named(cfg.frames, grid)
    return discretize(F, grid, frames=frames, mode=cfg.mode)


def step_residual(disc: DiscreteOperator, z: np.ndarray, z_prev: np.ndarray,
                  h: float, t: float) -> np.ndarray:
    return disc.evaluate(z, t) + (z - z_prev) / h


def _norm(r: np.ndarray) -> float:
    return float(np.max(np.abs(r))) if r.size else 0.0


def _check_inputs(z_prev: GridFunction, h: float):
    if not h > 0:
        raise ValueError("time step h must be positive")


def newton(F: EllipticOperator, z_prev: GridFunction, h: float, t_next: float,
           cfg: StepConfig = StepConfig(), initial: GridFunction | None = None,
           discretization: DiscreteOperator | None = None) -> tuple[GridFunction, StepSolveReport]:
    """Semismooth Newton with sup-norm backtracking.

    Raises :class:`NonConvergence` on stall (step factor underflow) or when
    the iteration cap is hit.
    """
    _check_inputs(z_prev, h)
    grid = z_prev.grid
    disc = _disc(F, grid, cfg, discretization)
    tol = cfg.effective_tolerance(h)
    zp = z_prev.flat
    z = (initial if initial is not None else z_prev).flat.copy()
    r = step_residual(disc, z, zp, h, t_next)
    rn = _norm(r)
    eye = sp.identity(grid.size, format="csc") / h
    it = 0
    while rn > tol:
        if it >= cfg.max_newton_iters:
            rep = StepSolveReport("newton", it, rn, False, tol, notes=["iteration cap"])
            raise NonConvergence("Newton iteration cap reached", GridFunction(grid, z), rep)
        it += 1
        J = (disc.jacobian(z, t_next) + eye).tocsc()
        dz = spla.spsolve(J, -r)
        if not np.all(np.isfinite(dz)):
            rep = StepSolveReport("newton", it, rn, False, tol, notes=["singular Jacobian"])
            raise NonConvergence("Newton linear solve failed", GridFunction(grid, z), rep)
        step = cfg.damping
        while True:
            z_try = z + step * dz
            r_try = step_residual(disc, z_try, zp, h, t_next)
            rn_try = _norm(r_try)
            if rn_try <= tol or rn_try <= (1.0 - 1e-4 * step) * rn:
                break
            step *= 0.5
            if step < 1e-10:
                rep = StepSolveReport("newton", it, rn, False, tol, notes=["damping underflow"])
                raise NonConvergence("Newton stalled", GridFunction(grid, z), rep)
        z, r, rn = z_try, r_try, rn_try
    return GridFunction(grid, z), StepSolveReport("newton", it, rn, True, tol)


def pseudo_time_relaxation(F: EllipticOperator, z_prev: GridFunction, h: float, t_next: float,
                           cfg: StepConfig = StepConfig(), initial: GridFunction | None = None,
                           discretization: DiscreteOperator | None = None,
                           tau: float | None = None) -> tuple[GridFunction, StepSolveReport]:
    """Iterate ``z <- z - tau R(z)`` with ``tau = 1 / (1/h + L_h)``.

    ``L_h`` bounds the diagonal of the discrete operator's Jacobian, which
    makes the map a sup-norm contraction for monotone schemes. Passing a
    larger ``tau`` is allowed; divergence (residual growth by 1e6 or a
    non-finite value) is detected and raised as :class:`NonConvergence`.
    """
    _check_inputs(z_prev, h)
    grid = z_prev.grid
    disc = _disc(F, grid, cfg, discretization)
    tol = cfg.effective_tolerance(h)
    if tau is None:
        tau = 1.0 / (1.0 / h + disc.diagonal_bound())
    zp = z_prev.flat
    z = (initial if initial is not None else z_prev).flat.copy()
    r = step_residual(disc, z, zp, h, t_next)
    rn0 = rn = _norm(r)
    it = 0
    while rn > tol:
        if it >= cfg.max_pseudo_time_iters:
            rep = StepSolveReport("pseudo_time", it, rn, False, tol, notes=["iteration cap"])
            raise NonConvergence("pseudo-time cap reached", GridFunction(grid, z), rep)
        z = z - tau * r
        r = step_residual(disc, z, zp, h, t_next)
        rn = _norm(r)
        it += 1
        if not np.isfinite(rn) or rn > 1e6 * max(rn0, tol):
            rep = StepSolveReport("pseudo_time", it, rn, False, tol, notes=["diverged"])
            raise NonConvergence("pseudo-time relaxation diverged", GridFunction(grid, z), rep)
    return GridFunction(grid, z), StepSolveReport("pseudo_time", it, rn, True, tol)


def policy_iteration(F: BellmanOperator, z_prev: GridFunction, h: float, t_next: float,
                     cfg: StepConfig = StepConfig(), initial: GridFunction | None = None,
                     discretization: BellmanDiscretization | None = None,
                     ) -> tuple[GridFunction, StepSolveReport]:
    """Howard's algorithm: freeze the control per node, solve, re-select."""
    _check_inputs(z_prev, h)
    if not isinstance(F, BellmanOperator):
        raise TypeError("policy iteration needs a BellmanOperator")
    grid = z_prev.grid
    disc = discretization or BellmanDiscretization(F, grid, cfg.mode)
    tol = cfg.effective_tolerance(h)
    zp = z_prev.flat
    z = (initial if initial is not None else z_prev).flat.copy()
    policy, _ = disc.select(z, t_next)
    eye = sp.identity(grid.size, format="csc") / h
    rn = np.inf
    for it in range(1, cfg.max_newton_iters + 1):
        A = (disc.policy_matrix(policy) + eye).tocsc()
        rhs = zp / h - disc.policy_forcing(policy, t_next)
        z = spla.spsolve(A, rhs)
        if not np.all(np.isfinite(z)):
            rep = StepSolveReport("policy_iteration", it, np.inf, False, tol,
                                  notes=["singular frozen-control matrix"])
            raise NonConvergence("frozen-control system is singular",
                                 GridFunction(grid, zp), rep)
        vals = disc.control_values(z, t_next)
        cur = np.take_along_axis(vals, policy[None], 0)[0]
        best_k, best = disc.select(z, t_next)
        # switch only where strictly better, so ties cannot cycle
        gap = 1e-3 * tol
        better = (best > cur + gap) if disc.sup else (best < cur - gap)
        rn = _norm(best + (z - zp) / h)
        if not better.any():
            return GridFunction(grid, z), StepSolveReport("policy_iteration", it, rn,
                                                          rn <= tol, tol)
        policy = np.where(better, best_k, policy)
    rep = StepSolveReport("policy_iteration", cfg.max_newton_iters, rn, False, tol,
                          notes=["iteration cap"])
    raise NonConvergence("policy iteration cap reached", GridFunction(grid, z), rep)


def solve_step(F: EllipticOperator, z_prev: GridFunction, h: float, t_next: float,
               cfg: StepConfig = StepConfig(), initial: GridFunction | None = None,
               method: str = "auto", discretization: DiscreteOperator | None = None,
               ) -> tuple[GridFunction, StepSolveReport]:
    """Solve one implicit step to ``||R||_inf <= tol``.

    ``method`` is ``"auto"`` (Newton, then pseudo-time on failure),
    ``"newton"``, ``"policy_iteration"`` or ``"pseudo_time"``. The default
    initial iterate is ``z_prev``.
    """
    _check_inputs(z_prev, h)
    disc = _disc(F, z_prev.grid, cfg, discretization)
    if method == "newton":
        return newton(F, z_prev, h, t_next, cfg, initial, disc)
    if method == "pseudo_time":
        return pseudo_time_relaxation(F, z_prev, h, t_next, cfg, initial, disc)
    if method == "policy_iteration":
        pdisc = disc if isinstance(disc, BellmanDiscretization) else None
        return policy_iteration(F, z_prev, h, t_next, cfg, initial, pdisc)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    try:
        return newton(F, z_prev, h, t_next, cfg, initial, disc)
    except NonConvergence as exc:
        log.info("Newton failed (%s); switching to pseudo-time relaxation", exc)
        start = exc.best
        if not np.all(np.isfinite(start.flat)):
            start = initial if initial is not None else z_prev
        try:
            z, rep = pseudo_time_relaxation(F, z_prev, h, t_next, cfg, start, disc)
        except NonConvergence as exc2:
            exc2.report.switched_from = "newton"
            raise
        rep = replace(rep, switched_from="newton",
                      iterations=rep.iterations + exc.report.iterations,
                      notes=exc.report.notes + rep.notes)
        return z, rep
