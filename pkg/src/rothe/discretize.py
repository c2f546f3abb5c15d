"""Discrete operators ``F_h`` acting on flattened interior values.

``discretize(F, grid, frames, mode)`` dispatches on the operator type.
Every discretization exposes

* ``evaluate(u, t)``: nodal values of ``F_h(u)``;
* ``jacobian(u, t)``: a sparse element of the (Clarke) generalized
  Jacobian, obtained by freezing the active branch of every max/min;
* ``diagonal_bound()``: an upper bound for the diagonal of any such
  Jacobian, used to pick a contractive pseudo-time step.

In ``"monotone"`` mode the schemes are nonincreasing in every off-center
value. ``"centered"`` mode evaluates ``F`` pointwise on centered difference
quotients and is meant for smooth problems and convergence studies.
"""

from __future__ import annotations

from functools import singledispatch

import numpy as np
import scipy.sparse as sp

from .grid import Grid, StencilFrame, Stencils, stencils_for, upwind_norm_and_jacobian
from .operators import (
    BellmanOperator,
    EllipticOperator,
    LinearOperator,
    PucciOperator,
)

MODES = ("monotone", "centered")


class DiscreteOperator:
    grid: Grid
    is_linear = False

    def evaluate(self, u: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, u: np.ndarray, t: float) -> sp.csr_matrix:
        raise NotImplementedError

    def diagonal_bound(self) -> float:
        raise NotImplementedError


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"unknown discretization mode {mode!r}; expected one of {MODES}")


@singledispatch
def discretize(F: EllipticOperator, grid: Grid, frames: StencilFrame | None = None,
               mode: str = "monotone") -> DiscreteOperator:
    _check_mode(mode)
    if F.dim != grid.dim:
        raise ValueError(f"operator dimension {F.dim} does not match grid dimension {grid.dim}")
    return PointwiseDiscretization(F, grid)


def _diffusion_weights(A: np.ndarray, grid: Grid):
    """Nonnegative weights ``alpha_e`` with ``Tr(A D^2u) ~ sum alpha_e d_e^2 u``.

    1D uses the axis; 2D splits the off-diagonal entry onto the diagonal
    directions. Raises when ``A`` is not diagonally dominant enough for a
    monotone split on this grid.
    """
    if grid.dim == 1:
        return [((1,), float(A[0, 0]))]
    dx, dy = grid.spacing
    a11, a12, a22 = float(A[0, 0]), float(A[0, 1]), float(A[1, 1])
    weights = []
    if a12 != 0.0:
        r2 = dx * dx + dy * dy
        scale = r2 / (dx * dy)
        if a12 > 0:
            weights.append(((1, 1), a12 * scale))
        else:
            weights.append(((1, -1), -a12 * scale))
        diag_w = abs(a12) * scale
        w1 = a11 - diag_w * dx * dx / r2
        w2 = a22 - diag_w * dy * dy / r2
    else:
        w1, w2 = a11, a22
    if w1 < -1e-14 or w2 < -1e-14:
        raise ValueError(
            "coefficient matrix is not diagonally dominant on this grid; "
            "no monotone narrow-stencil split exists"
        )
    weights = [((1, 0), max(w1, 0.0)), ((0, 1), max(w2, 0.0))] + weights
    return weights


def _linear_matrix(st: Stencils, A, b, c, mode) -> sp.csr_matrix:
    g = st.grid
    n = g.size
    mat = sp.identity(n, format="csr") * c
    if mode == "monotone":
        for e, w in _diffusion_weights(A, g):
            if w != 0.0:
                mat = mat - w * st.second_difference(e)
        for a in range(g.dim):
            if b[a] > 0:
                mat = mat + b[a] * st.backward(a)
            elif b[a] < 0:
                mat = mat + b[a] * st.forward(a)
    else:
        for a in range(g.dim):
            for bb in range(g.dim):
                if A[a, bb] != 0.0:
                    mat = mat - A[a, bb] * st.hessian_entry(a, bb)
            if b[a] != 0.0:
                mat = mat + b[a] * st.centered_first(a)
    return mat.tocsr()


class LinearDiscretization(DiscreteOperator):
    """``F_h(u) = L u + f(x, t)`` for a constant-coefficient linear operator."""

    is_linear = True

    def __init__(self, grid: Grid, A, b, c, forcing, mode="monotone"):
        self.grid = grid
        st = stencils_for(grid)
        self.matrix = _linear_matrix(st, np.asarray(A), np.asarray(b), float(c), mode)
        self.forcing = forcing
        self._points = grid.points
        self._ti = forcing.time_independent
        self._f_cache = None

    def forcing_values(self, t: float) -> np.ndarray:
        if self._ti:
            if self._f_cache is None:
                self._f_cache = self.forcing(self._points, t)
            return self._f_cache
        return self.forcing(self._points, t)

    def evaluate(self, u, t):
        return self.matrix @ u + self.forcing_values(t)

    def jacobian(self, u, t):
        return self.matrix

    def diagonal_bound(self) -> float:
        return float(np.max(self.matrix.diagonal()))


@discretize.register
def _(F: LinearOperator, grid: Grid, frames=None, mode="monotone"):
    _check_mode(mode)
    if F.dim != grid.dim:
        raise ValueError("operator/grid dimension mismatch")
    return LinearDiscretization(grid, F.A, F.b, F.c, F.forcing, mode)


class BellmanDiscretization(DiscreteOperator):
    """Pointwise sup (inf) over the monotone linear discretization of each control."""

    def __init__(self, F: BellmanOperator, grid: Grid, mode="monotone"):
        self.grid = grid
        self.operator = F
        self.parts = [LinearDiscretization(grid, c.A, c.b, c.c, c.forcing, mode)
                      for c in F.controls]
        self.sup = F.combiner == "sup"

    def control_values(self, u, t) -> np.ndarray:
        return np.stack([p.evaluate(u, t) for p in self.parts])

    def select(self, u, t):
        vals = self.control_values(u, t)
        k = np.argmax(vals, axis=0) if self.sup else np.argmin(vals, axis=0)
        return k, np.take_along_axis(vals, k[None], 0)[0]

    def evaluate(self, u, t):
        return self.select(u, t)[1]

    def policy_matrix(self, policy: np.ndarray) -> sp.csr_matrix:
        """Frozen-control matrix: row ``i`` taken from control ``policy[i]``."""
        n = self.grid.size
        mat = sp.csr_matrix((n, n))
        for k, part in enumerate(self.parts):
            mask = (policy == k).astype(float)
            if mask.any():
                mat = mat + sp.diags(mask) @ part.matrix
        return mat.tocsr()

    def policy_forcing(self, policy: np.ndarray, t: float) -> np.ndarray:
        f = np.stack([p.forcing_values(t) for p in self.parts])
        return np.take_along_axis(f, policy[None], 0)[0]

    def jacobian(self, u, t):
        return self.policy_matrix(self.select(u, t)[0])

    def diagonal_bound(self) -> float:
        return max(p.diagonal_bound() for p in self.parts)


@discretize.register
def _(F: BellmanOperator, grid: Grid, frames=None, mode="monotone"):
    _check_mode(mode)
    if F.dim != grid.dim:
        raise ValueError("operator/grid dimension mismatch")
    return BellmanDiscretization(F, grid, mode)


class PucciDiscretization(DiscreteOperator):
    """Frame-extremal discretization of ``P^{sign}(D^2u) + sign*gamma|Du| + c u + f``."""

    def __init__(self, F: PucciOperator, grid: Grid, frames: StencilFrame):
        frames.validate(grid)
        self.grid = grid
        self.operator = F
        self.frames = frames
        self.st = stencils_for(grid)
        self.sign = F.sign
        self.lam, self.Lam = F.lam, F.Lam
        self._points = grid.points

    def _phi(self, s):
        if self.sign > 0:
            return np.maximum(-self.lam * s, -self.Lam * s)
        return np.minimum(-self.Lam * s, -self.lam * s)

    def _dphi(self, s):
        if self.sign > 0:
            return np.where(s > 0, -self.lam, -self.Lam)
        return np.where(s > 0, -self.Lam, -self.lam)

    def _frame_values(self, u):
        seconds = {e: self.st.second_difference(e) @ u for e in self.frames.directions}
        vals = np.stack([sum(self._phi(seconds[e]) for e in fr) for fr in self.frames.frames])
        return seconds, vals

    def second_order(self, u):
        _, vals = self._frame_values(u)
        return vals.max(axis=0) if self.sign > 0 else vals.min(axis=0)

    def evaluate(self, u, t):
        F = self.operator
        out = self.second_order(u) + F.c * u + F.forcing(self._points, t)
        if F.gamma:
            norm, _ = upwind_norm_and_jacobian(self.st, u, self.sign, jacobian=False)
            out = out + self.sign * F.gamma * norm
        return out

    def jacobian(self, u, t):
        F = self.operator
        n = self.grid.size
        seconds, vals = self._frame_values(u)
        active = np.argmax(vals, axis=0) if self.sign > 0 else np.argmin(vals, axis=0)
        jac = sp.identity(n, format="csr") * F.c
        for k, fr in enumerate(self.frames.frames):
            mask = active == k
            if not mask.any():
                continue
            for e in fr:
                w = np.where(mask, self._dphi(seconds[e]), 0.0)
                jac = jac + sp.diags(w) @ self.st.second_difference(e)
        if F.gamma:
            _, gj = upwind_norm_and_jacobian(self.st, u, self.sign)
            jac = jac + self.sign * F.gamma * gj
        return jac.tocsr()

    def diagonal_bound(self) -> float:
        F = self.operator
        per_frame = [sum(self.st.center_weight(e) for e in fr) for fr in self.frames.frames]
        bound = F.Lam * float(np.max(np.max(per_frame, axis=0)))
        grad = F.gamma * float(np.sqrt(sum(1.0 / dx ** 2 for dx in self.grid.spacing)))
        return bound + grad + F.c


@discretize.register
def _(F: PucciOperator, grid: Grid, frames=None, mode="monotone"):
    _check_mode(mode)
    if F.dim != grid.dim:
        raise ValueError("operator/grid dimension mismatch")
    if mode == "centered":
        return PointwiseDiscretization(F, grid)
    return PucciDiscretization(F, grid, frames or StencilFrame.narrow(grid))


class PointwiseDiscretization(DiscreteOperator):
    """``F`` evaluated nodewise on centered Hessian/gradient quotients.

    The Jacobian is a one-sided finite difference with probe
    ``fd_epsilon * (1 + |u|)``, assembled with a coloring of the 3^d stencil
    so that only ``3^d`` extra residual evaluations are needed.
    """

    def __init__(self, F: EllipticOperator, grid: Grid, fd_epsilon: float = 1e-7):
        self.grid = grid
        self.operator = F
        self.st = stencils_for(grid)
        self.fd_epsilon = fd_epsilon
        self._points = grid.points
        idx = np.indices(grid.shape).reshape(grid.dim, -1).T
        self._colors = np.ravel_multi_index(tuple((idx % 3).T), (3,) * grid.dim)
        pattern = sp.identity(grid.size, format="csr")
        for a in range(grid.dim):
            for b in range(grid.dim):
                pattern = pattern + abs(self.st.hessian_entry(a, b))
        self._pattern = (pattern != 0).tocoo()

    def evaluate(self, u, t):
        H = self.st.hessians(u)
        G = self.st.gradients(u)
        return self.operator.evaluate_many(H, G, u, self._points, t)

    def jacobian(self, u, t):
        base = self.evaluate(u, t)
        rows, cols = self._pattern.row, self._pattern.col
        vals = np.zeros(len(rows))
        step = self.fd_epsilon * (1.0 + np.abs(u))
        for color in range(3 ** self.grid.dim):
            mask = self._colors == color
            if not mask.any():
                continue
            up = u + np.where(mask, step, 0.0)
            diff = (self.evaluate(up, t) - base)
            sel = mask[cols]
            vals[sel] = diff[rows[sel]] / step[cols[sel]]
        n = self.grid.size
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def diagonal_bound(self) -> float:
        F = self.operator
        hmin = min(self.grid.spacing)
        d_eff = self.grid.dim
        return 2.0 * d_eff * F.Lam / hmin ** 2 + F.gamma / hmin + F.r_lipschitz
