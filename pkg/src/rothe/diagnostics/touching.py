"""Randomized viscosity spot check with space-time quadratics.

A candidate limit ``U`` (the finest Rothe level, optionally scaled) is
probed by quadratics ``phi`` whose PDE residual ``phi_t + F[phi]`` has a
fixed sign on a small space-time window. Shifting ``phi`` vertically until
it touches ``U`` from above (residual >= eps0) or below (residual <= -eps0)
must not produce an interior touch where the discrete step equation of
``U`` agrees with the sign of ``phi``'s residual.

Window: 5 nodes per axis and 3 mesh times ``t_{m-1}, t_m, t_{m+1}``.
The quadratic is a random perturbation of the candidate's discrete jet at
the window center: ``Q = D^2U + Q~`` with ``|Q~_ij| <= 2``, ``b = DU + b~``
with ``|b~_i| <= dx`` and ``beta = D_t^- U + beta~`` with ``|beta~| <= 1``.
Without the jet, tilted quadratics almost never touch inside the window.
Touches on the parabolic boundary of the window (spatial edge or earliest
time) cannot contradict anything and count as passes.

At an interior touch ``(x*, t_k)`` monotonicity of the scheme gives::

    r_U >= D_phi   (touch from above)      r_U <= D_phi   (touch from below)

with ``r_U`` the candidate's step residual and ``D_phi`` the same discrete
expression applied to the shifted quadratic. The trial passes when the
residual contradicts the sign of ``phi``: ``E - r_U >= eps0/2 - slack``
(above) or ``r_U - E >= eps0/2 - slack`` (below), where ``E`` is the
continuous residual at the touch point and ``slack = |E - D_phi|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ..discretize import discretize
from ..driver import RefinementLadder, RotheSequence
from ..grid import StencilFrame, stencils_for
from .report import CheckResult

__all__ = ["viscosity_touch_test", "TouchTrial"]

HALF_WIDTH = 2
Q_RANGE = 2.0
BETA_RANGE = 1.0
EPSILON0 = 0.1


@dataclass
class TouchTrial:
    index: int
    direction: str          # "sub" (touch from above) or "super" (from below)
    interior: bool
    passed: bool
    margin: float
    slack: float
    node: tuple
    step: int


def _candidate_arrays(seq: RotheSequence, scale: float) -> np.ndarray:
    if not seq.complete:
        raise ValueError("touching test needs every iterate (disable thinning)")
    return scale * np.stack([z.flat for z in seq.iterates])


def viscosity_touch_test(source, trial_count: int = 200, seed: int = 0,
                         candidate_scale: float = 1.0, epsilon0: float = EPSILON0,
                         pass_fraction: float = 0.95, max_draws: int | None = None,
                         ) -> CheckResult:
    """Run random quadratic touching trials on the finest level of ``source``.

    Parameters
    ----------
    source : RefinementLadder or RotheSequence
    trial_count : int
        Number of qualifying trials to collect.
    candidate_scale : float
        Multiplies the iterates before testing; ``2`` gives the negative
        control, which is not a solution and must fail some trials.
    max_draws : int, optional
        Cap on total draws (default ``200 * trial_count``).

    Returns
    -------
    CheckResult
        ``measured`` is the passing fraction; ``bound`` is ``pass_fraction``.
        ``details`` counts discarded draws, interior touches and failures.
    """
    seq = source.finest if isinstance(source, RefinementLadder) else source
    F = seq.operator
    grid = seq.grid
    d = grid.dim
    h = seq.h
    N = seq.N
    if any(n < 2 * HALF_WIDTH + 1 for n in grid.shape) or N < 2:
        raise ValueError("grid or horizon too small for the touching window")
    cand = _candidate_arrays(seq, candidate_scale)
    disc = discretize(F, grid, frames=StencilFrame.named(seq.config.frames, grid),
                      mode=seq.config.mode)
    st = stencils_for(grid)
    # candidate step residuals r_U[k] for k = 1..N
    r_cand = np.empty_like(cand)
    r_cand[0] = np.nan
    for k in range(1, N + 1):
        r_cand[k] = disc.evaluate(cand[k], k * h) + (cand[k] - cand[k - 1]) / h
    grads = [st.gradients(cand[k]) for k in range(N + 1)]
    hessians = [st.hessians(cand[k]) for k in range(N + 1)]

    offsets = np.array(list(product(range(-HALF_WIDTH, HALF_WIDTH + 1), repeat=d)))
    spatial_edge = np.any(np.abs(offsets) == HALF_WIDTH, axis=1)
    pts_all = grid.points
    dx = min(grid.spacing)
    max_draws = max_draws or 200 * trial_count

    trials: list[TouchTrial] = []
    discarded = 0
    draws = 0
    while len(trials) < trial_count and draws < max_draws:
        idx = draws
        draws += 1
        rng = np.random.default_rng([seed, idx])
        center = np.array([rng.integers(HALF_WIDTH, n - HALF_WIDTH) for n in grid.shape])
        m = int(rng.integers(1, N))
        Qr = rng.uniform(-Q_RANGE, Q_RANGE, (d, d))
        Q_tilde = np.triu(Qr) + np.triu(Qr, 1).T
        b_tilde = rng.uniform(-dx, dx, d)
        beta_tilde = rng.uniform(-BETA_RANGE, BETA_RANGE)

        c_flat = int(np.ravel_multi_index(tuple(center), grid.shape))
        x0 = pts_all[c_flat]
        t0 = m * h
        Q = hessians[m][c_flat] + Q_tilde
        b = grads[m][c_flat] + b_tilde
        beta = (cand[m][c_flat] - cand[m - 1][c_flat]) / h + beta_tilde

        nodes = center[None, :] + offsets
        flat = np.ravel_multi_index(tuple(nodes.T), grid.shape)
        X = pts_all[flat]
        Y = X - x0
        lin = Y @ b + 0.5 * np.einsum("ni,ij,nj->n", Y, Q, Y)
        times = (m - 1, m, m + 1)
        phi = np.stack([lin + beta * (k * h - t0) for k in times])          # (3, P)
        U = np.stack([cand[k][flat] for k in times])

        # try the sub direction first; a draw can qualify for at most one
        gap = U - phi
        E_sub = _residual(F, Q, b, Y, X, phi + gap.max(), beta, times, h)
        E_sup = _residual(F, Q, b, Y, X, phi + gap.min(), beta, times, h)
        if E_sub.min() >= epsilon0:
            direction, shift, E = "sub", gap.max(), E_sub
            loc = np.unravel_index(int(np.argmax(gap)), gap.shape)
        elif E_sup.max() <= -epsilon0:
            direction, shift, E = "super", gap.min(), E_sup
            loc = np.unravel_index(int(np.argmin(gap)), gap.shape)
        else:
            discarded += 1
            continue
        ti, pi = int(loc[0]), int(loc[1])
        k = times[ti]
        interior = ti > 0 and not spatial_edge[pi]
        if not interior:
            trials.append(TouchTrial(idx, direction, False, True, np.inf, 0.0,
                                     tuple(nodes[pi]), k))
            continue
        # discrete expression of the shifted quadratic at the touch point
        Yg = pts_all - x0
        quad = Yg @ b + 0.5 * np.einsum("ni,ij,nj->n", Yg, Q, Yg) + shift
        phi_k = quad + beta * (k * h - t0)
        node_flat = int(flat[pi])
        # the time difference of phi is exactly beta
        D_phi = float(disc.evaluate(phi_k, k * h)[node_flat] + beta)
        e_val = float(E[ti, pi])
        slack = abs(e_val - D_phi)
        r_u = float(r_cand[k][node_flat])
        margin = e_val - r_u if direction == "sub" else r_u - e_val
        ok = margin >= epsilon0 / 2 - slack
        trials.append(TouchTrial(idx, direction, True, bool(ok), margin, slack,
                                 tuple(nodes[pi]), k))

    n = len(trials)
    n_pass = sum(t.passed for t in trials)
    frac = n_pass / n if n else 0.0
    n_int = sum(t.interior for t in trials)
    table = [(t.index, t.direction, int(t.interior), int(t.passed), t.margin, t.slack, t.step)
             for t in trials]
    return CheckResult(
        "touching", frac, pass_fraction, frac - pass_fraction, 0.0,
        details={"qualifying": n, "requested": trial_count, "passed": n_pass,
                 "failed": n - n_pass, "interior_touches": n_int, "discarded": discarded,
                 "draws": draws, "candidate_scale": candidate_scale, "epsilon0": epsilon0,
                 "h": h, "seed": seed},
        table=table,
        table_header=("trial", "direction", "interior", "passed", "margin", "slack", "step"),
    )


def _residual(F, Q, b, Y, X, phi, beta, times, h):
    """``beta + F(Q, b + Q y, phi, x, t)`` on the window, shape ``(3, P)``."""
    P = len(X)
    M = np.broadcast_to(Q, (P,) + Q.shape)
    p = b[None, :] + Y @ Q
    return np.stack([beta + F.evaluate_many(M, p, phi[i], X, k * h)
                     for i, k in enumerate(times)])
