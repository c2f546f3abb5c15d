"""The Rothe loop: ``z_0 = 0`` followed by implicit steps of size ``h``.

``run_rothe`` produces a :class:`RotheSequence`; ``interpolate`` evaluates
the piecewise-linear-in-time interpolant; ``refinement_ladder`` repeats the
run over decreasing ``h`` on a shared grid and builds Cauchy tables.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .discretize import discretize
from .grid import Grid, GridFunction, StencilFrame
from .operators import EllipticOperator
from .step_solver import NonConvergence, StepConfig, StepSolveReport, solve_step

__all__ = ["RotheSequence", "RefinementLadder", "run_rothe", "interpolate", "refinement_ladder",
           "step_count"]


def step_count(T: float, h: float) -> int:
    """``ceil(T/h)``, robust to ``T/h`` landing a rounding error above an integer."""
    q = T / h
    n = round(q)
    if abs(q - n) <= 1e-9 * max(1.0, q):
        return max(int(n), 1)
    return int(math.ceil(q))


@dataclass
class RotheSequence:
    """Iterates ``z_0..z_N`` for one mesh size ``h``.

    With thinned storage some entries of ``iterates`` are ``None``; the
    increment norms ``||z_{n+1} - z_n||`` and ``||z_1||`` are always kept.
    """

    operator: EllipticOperator
    grid: Grid
    h: float
    T: float
    iterates: list
    reports: list[StepSolveReport]
    increment_norms: list[float] = field(default_factory=list)
    config: StepConfig = field(default_factory=StepConfig)

    @property
    def N(self) -> int:
        return len(self.iterates) - 1

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.N + 1)

    def iterate(self, n: int) -> GridFunction:
        z = self.iterates[n]
        if z is None:
            raise KeyError(f"iterate {n} was not retained (thinned storage)")
        return z

    @property
    def complete(self) -> bool:
        return all(z is not None for z in self.iterates)

    @property
    def tolerance(self) -> float:
        return self.config.effective_tolerance(self.h)


def run_rothe(F: EllipticOperator, grid: Grid, h: float, T: float,
              cfg: StepConfig = StepConfig(), *, thin: int = 1,
              initial: GridFunction | None = None, method: str = "auto") -> RotheSequence:
    """Run ``N = ceil(T/h)`` implicit steps from ``z_0 = 0``.

    Parameters
    ----------
    thin : int
        Keep every ``thin``-th iterate plus its successor (and the last one).
    initial : GridFunction, optional
        Start from this function instead of zero. Only meaningful for
        time-independent operators (restarting a run); configs never set it.

    Raises
    ------
    NonConvergence
        On the first failed step, with ``step`` and ``partial`` (the
        sequence so far) attached.
    """
    if not 0 < h <= 1:
        raise ValueError(f"mesh size must satisfy 0 < h <= 1, got {h}")
    if not T > 0:
        raise ValueError("horizon T must be positive")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    N = step_count(T, h)
    frames = StencilFrame.named(cfg.frames, grid)
    disc = discretize(F, grid, frames=frames, mode=cfg.mode)
    z = initial if initial is not None else GridFunction.zeros(grid)
    if z.grid != grid:
        raise ValueError("initial data lives on a different grid")
    iterates: list = [z]
    reports: list[StepSolveReport] = []
    incs: list[float] = []
    seq = RotheSequence(F, grid, h, T, iterates, reports, incs, cfg)
    for n in range(N):
        try:
            z_next, rep = solve_step(F, z, h, (n + 1) * h, cfg, method=method,
                                     discretization=disc)
        except NonConvergence as exc:
            exc.step = n + 1
            exc.partial = seq
            raise
        incs.append((z_next - z).norm_inf())
        reports.append(rep)
        keep = thin == 1 or (n + 1) % thin in (0, 1) or n + 1 == N
        iterates.append(z_next if keep else None)
        z = z_next
    return seq


def interpolate(seq: RotheSequence, t: float) -> GridFunction:
    """Linear interpolant in time; returns ``z_m`` itself at ``t = m h``."""
    if not 0 <= t <= seq.T:
        raise ValueError(f"t={t} outside [0, {seq.T}]")
    h = seq.h
    q = t / h
    m = round(q)
    # a mesh time up to rounding returns the stored iterate itself
    if abs(q - m) <= 1e-12 * max(1.0, q):
        return seq.iterate(min(m, seq.N))
    m = int(math.floor(q))
    a = ((m + 1) * h - t) / h
    b = (t - m * h) / h
    return GridFunction(seq.grid, a * seq.iterate(m).values + b * seq.iterate(m + 1).values)


@dataclass
class RefinementLadder:
    """Rothe sequences for decreasing ``h`` on one grid and horizon."""

    h_values: tuple[float, ...]
    levels: list[RotheSequence]

    @property
    def finest(self) -> RotheSequence:
        return self.levels[-1]

    def cauchy_table(self, times: Sequence[float], pairs: str = "consecutive"):
        """Rows ``(h_coarse, h_fine, t, sup|U_coarse - U_fine|)`` in fixed order."""
        rows = []
        n = len(self.levels)
        if pairs == "consecutive":
            index_pairs = [(i, i + 1) for i in range(n - 1)]
        elif pairs == "all":
            index_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        else:
            raise ValueError("pairs must be 'consecutive' or 'all'")
        for t in times:
            for i, j in index_pairs:
                a, b = self.levels[i], self.levels[j]
                diff = (interpolate(a, t) - interpolate(b, t)).norm_inf()
                rows.append((a.h, b.h, float(t), diff))
        return rows

    def error_table(self, exact, times: Sequence[float]):
        """Rows ``(h, t, error, observed_order)``; the order is NaN on the first level."""
        rows = []
        for t in times:
            prev = None
            for seq in self.levels:
                u = GridFunction.from_function(seq.grid, lambda x: exact(x, t))
                err = (interpolate(seq, t) - u).norm_inf()
                if prev is None or err == 0 or prev[1] == 0:
                    order = math.nan
                else:
                    order = math.log(prev[1] / err) / math.log(prev[0] / seq.h)
                rows.append((seq.h, float(t), err, order))
                prev = (seq.h, err)
        return rows


def refinement_ladder(F: EllipticOperator, grid: Grid, h_list: Sequence[float], T: float,
                      cfg: StepConfig = StepConfig(), *, max_workers: int = 1,
                      thin: int = 1, method: str = "auto") -> RefinementLadder:
    """Run every level; levels may run concurrently, results keep ``h_list`` order."""
    h_list = tuple(float(h) for h in h_list)
    if not h_list:
        raise ValueError("empty ladder")
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly decreasing")
    for h in h_list:
        if not 0 < h <= 1:
            raise ValueError(f"mesh size must satisfy 0 < h <= 1, got {h}")

    def run(level):
        try:
            return run_rothe(F, grid, h_list[level], T, cfg, thin=thin, method=method)
        except NonConvergence as exc:
            exc.level = level
            raise

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            levels = list(pool.map(run, range(len(h_list))))
    else:
        levels = [run(k) for k in range(len(h_list))]
    return RefinementLadder(h_list, levels)


def geometric_ladder(h0: float, levels: int) -> tuple[float, ...]:
    """``h_k = h0 * 2^-k`` for ``k < levels``."""
    return tuple(h0 * 0.5 ** k for k in range(levels))
