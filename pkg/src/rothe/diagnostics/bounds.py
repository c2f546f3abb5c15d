"""A-priori estimates checked on computed Rothe sequences.

Constants in the estimates are existential, so ladder checks report the
measured quantity per level and require its spread (max/min) to stay below
``LADDER_SPREAD``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..driver import RefinementLadder, RotheSequence
from ..grid import GridFunction, StencilFrame, stencils_for
from ..operators import EllipticOperator, pucci_values
from .report import CheckResult, DiagnosticsReport, ratio_spread

__all__ = [
    "LADDER_SPREAD",
    "first_step_bounds",
    "first_step_ladder",
    "increment_report",
    "lipschitz_in_time",
    "lipschitz_ladder",
    "gronwall_bound",
    "gronwall_recursion",
    "pucci_sandwich_check",
    "pucci_sandwich_report",
    "consistency_constant",
]

LADDER_SPREAD = 4.0


def _levels(ladder) -> list[RotheSequence]:
    return ladder.levels if isinstance(ladder, RefinementLadder) else list(ladder)


def first_step_bounds(seq: RotheSequence) -> CheckResult:
    """``||z_1||`` and the ratio ``||z_1|| / h`` (informational, always passes)."""
    if seq.N < 1:
        raise ValueError("sequence has no steps")
    z1 = seq.increment_norms[0]
    return CheckResult("first_step", z1 / seq.h, math.inf, math.inf,
                       details={"h": seq.h, "z1_norm": z1, "ratio": z1 / seq.h})


def first_step_ladder(ladder) -> CheckResult:
    """``||z_1||/h`` bounded independently of ``h``: spread across levels <= 4."""
    levels = _levels(ladder)
    ratios = [first_step_bounds(s).measured for s in levels]
    spread = ratio_spread(ratios)
    return CheckResult("first_step_ladder", spread, LADDER_SPREAD, LADDER_SPREAD - spread,
                       table=[(s.h, s.increment_norms[0], r) for s, r in zip(levels, ratios)],
                       table_header=("h", "z1_norm", "ratio"))


def increment_report(seq: RotheSequence, sigma2: float | None = None,
                     tolerance: float | None = None) -> CheckResult:
    """``||w_n|| <= ||w_{n-1}|| + h sigma_2(h) + 2 tol`` for every ``n >= 1``.

    ``w_n = z_{n+1} - z_n``. ``sigma2`` defaults to the operator's time
    modulus at ``h``; ``tolerance`` to the solver's effective tolerance.
    """
    w = list(seq.increment_norms)
    if len(w) < 2:
        raise ValueError("need at least two steps")
    h = seq.h
    if sigma2 is None:
        sigma2 = seq.operator.sigma2(h, horizon=seq.T)
    tol = seq.tolerance if tolerance is None else tolerance
    rows = []
    worst = math.inf
    worst_n = None
    for n in range(1, len(w)):
        bound = w[n - 1] + h * sigma2
        margin = bound - w[n]
        rows.append((n, w[n], bound, margin))
        if margin < worst:
            worst, worst_n = margin, n
    measured = w[worst_n]
    return CheckResult("increments", measured, measured + worst, worst, 2.0 * tol,
                       details={"h": h, "sigma2": sigma2, "worst_n": worst_n,
                                "time_independent": seq.operator.time_independent},
                       table=rows, table_header=("n", "w_norm", "bound", "margin"))


def lipschitz_in_time(seq: RotheSequence) -> CheckResult:
    """``L(h) = max_n ||w_n|| / h`` (informational)."""
    if seq.N < 1:
        raise ValueError("sequence has no steps")
    L = max(seq.increment_norms) / seq.h
    return CheckResult("lipschitz_time", L, math.inf, math.inf, details={"h": seq.h})


def lipschitz_ladder(ladder) -> CheckResult:
    """``L(h)`` stable across levels: spread <= 4."""
    levels = _levels(ladder)
    Ls = [lipschitz_in_time(s).measured for s in levels]
    spread = ratio_spread(Ls)
    return CheckResult("lipschitz_ladder", spread, LADDER_SPREAD, LADDER_SPREAD - spread,
                       table=[(s.h, L) for s, L in zip(levels, Ls)],
                       table_header=("h", "L"))


def _check_gronwall_inputs(v0, B, D):
    if len(B) != len(D):
        raise ValueError("B and D must have equal length")
    if v0 < 0 or any(b < 0 for b in B) or any(d < 0 for d in D):
        raise ValueError("Gronwall inputs must be nonnegative")


def gronwall_bound(v0, B: Sequence, D: Sequence):
    """Closed form ``v0 prod B_i + sum_i D_i prod_{j>i} B_j``.

    Works for any ordered field type (``float``, ``Fraction``); products and
    sums are formed directly, not through the recursion.
    """
    _check_gronwall_inputs(v0, B, D)
    n = len(B)
    total = v0
    for b in B:
        total = total * b
    for i in range(n):
        term = D[i]
        for j in range(i + 1, n):
            term = term * B[j]
        total = total + term
    return total


def gronwall_recursion(v0, B: Sequence, D: Sequence):
    """Extremal recursion ``v_{i+1} = B_i v_i + D_i``; returns ``v_n``."""
    _check_gronwall_inputs(v0, B, D)
    v = v0
    for b, d in zip(B, D):
        v = b * v + d
    return v


# ---------------------------------------------------------------------------
# sandwich inequalities for one implicit step


def _axis_differences(full: np.ndarray, axis: int, order: int) -> np.ndarray:
    out = full
    for _ in range(order):
        out = np.diff(out, axis=axis)
    return out


def consistency_constant(F: EllipticOperator, z: GridFunction,
                         frames: StencilFrame | None = None) -> tuple[float, dict]:
    """``C_s`` such that ``C_s * dx`` bounds the gap between the monotone
    scheme and centered-difference evaluation of ``F``.

    Two contributions: the gradient term (upwind vs centered differ by at
    most ``dx/2`` times the second difference per axis) and the Hessian
    term (second-difference truncation ``|De|^2 u''''/12`` along each
    stencil direction, with the fourth derivative probed by fourth
    differences of the zero-extended iterate).
    """
    grid = z.grid
    full = z.full()
    dx = min(grid.spacing)
    K2 = 0.0
    K4 = 0.0
    for a, ha in enumerate(grid.spacing):
        d2 = _axis_differences(full, a, 2) / ha ** 2
        K2 = max(K2, float(np.max(np.abs(d2))) if d2.size else 0.0)
        if full.shape[a] >= 5:
            d4 = _axis_differences(full, a, 4) / ha ** 4
            K4 = max(K4, float(np.max(np.abs(d4))) if d4.size else 0.0)
    frames = frames or StencilFrame.narrow(grid)
    dirs = frames.directions
    # |De|^2 of the longest direction; mixed fourth derivatives bounded by 4*K4
    longest = max(sum((c * hc) ** 2 for c, hc in zip(e, grid.spacing)) for e in dirs)
    hess_term = grid.dim * F.Lam * longest * (4.0 if grid.dim > 1 else 1.0) * K4 / 12.0
    grad_term = F.gamma * math.sqrt(grid.dim) * K2 / 2.0
    Cs = grad_term + hess_term / dx
    return Cs, {"K2": K2, "K4": K4, "grad_term": grad_term, "hess_term": hess_term}


def pucci_sandwich_check(F: EllipticOperator, z_n: GridFunction, z_np1: GridFunction,
                         h: float, t: float, R_bound: float | None = None,
                         tolerance: float = 1e-10, frames: StencilFrame | None = None,
                         ) -> CheckResult:
    """Evaluate both extremal inequalities for one step at every interior node.

    With ``H, p`` the centered Hessian and gradient of ``z_{n+1}`` and
    ``f = F(0,0,0,x,t)``::

        lower = P-(H) - gamma|p| - omega((-z)^+) + z/h + f  <=  z_n/h
        upper = P+(H) + gamma|p| + omega(z^+)    + z/h + f  >=  z_n/h

    ``measured`` is the smallest of the two margins over all nodes; the
    allowed deficit is ``C_s dx + tolerance (1 + 1/h)``.
    """
    grid = z_np1.grid
    if z_n.grid != grid:
        raise ValueError("grid mismatch")
    st = stencils_for(grid)
    z = z_np1.flat
    zp = z_n.flat
    H = st.hessians(z)
    p = st.gradients(z)
    eig = np.linalg.eigvalsh(H)
    pplus = pucci_values(eig, F.lam, F.Lam, 1)
    pminus = pucci_values(eig, F.lam, F.Lam, -1)
    gp = F.gamma * np.linalg.norm(p, axis=1)
    R = float(np.max(np.abs(z))) if R_bound is None else float(R_bound)
    om_lo = np.array([F.omega(R, max(-v, 0.0)) for v in z])
    om_up = np.array([F.omega(R, max(v, 0.0)) for v in z])
    f = F.zeroth_order(grid.points, t)
    lower = pminus - gp - om_lo + z / h + f
    upper = pplus + gp + om_up + z / h + f
    m_low = zp / h - lower
    m_up = upper - zp / h
    margins = np.minimum(m_low, m_up)
    k = int(np.argmin(margins))
    Cs, probe = consistency_constant(F, z_np1, frames)
    dx = min(grid.spacing)
    slack = Cs * dx + tolerance * (1.0 + 1.0 / h)
    measured = float(margins[k])
    return CheckResult(
        "pucci_sandwich", measured, 0.0, measured, slack,
        details={"t": t, "h": h, "worst_node": tuple(np.unravel_index(k, grid.shape)),
                 "min_lower_margin": float(np.min(m_low)),
                 "min_upper_margin": float(np.min(m_up)),
                 "C_s": Cs, "dx": dx, **probe},
    )


def pucci_sandwich_report(seq: RotheSequence, steps: Sequence[int],
                          tolerance: float | None = None) -> DiagnosticsReport:
    """Sandwich check at the given step indices ``n`` (pair ``z_n, z_{n+1}``)."""
    rep = DiagnosticsReport()
    tol = seq.config.tolerance if tolerance is None else tolerance
    frames = StencilFrame.named(seq.config.frames, seq.grid)
    for n in steps:
        c = pucci_sandwich_check(seq.operator, seq.iterate(n), seq.iterate(n + 1), seq.h,
                                 (n + 1) * seq.h, tolerance=tol, frames=frames)
        c.name = f"pucci_sandwich[n={n}]"
        rep.add(c)
    return rep
