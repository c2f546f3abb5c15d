"""Uniform Cartesian grids with homogeneous Dirichlet data and difference stencils.

Values of a :class:`GridFunction` live on interior nodes only; the boundary
layer is identically zero. Every difference quotient is available both as
a pointwise function (``directional_second_difference`` and friends) and
as a sparse matrix acting on flattened interior values (:class:`Stencils`),
which is what the solvers use.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .operators import SymMatrix

__all__ = [
    "Grid",
    "GridFunction",
    "StencilFrame",
    "Stencils",
    "directional_second_difference",
    "discrete_hessian",
    "centered_gradient",
    "upwind_gradient_norm",
    "discrete_pucci_plus",
    "discrete_pucci_minus",
    "assemble_residual",
]


@dataclass(frozen=True)
class Grid:
    """Tensor grid on ``prod [a_i, b_i]`` with ``n_i`` interior nodes per axis.

    Interior node ``k`` on axis ``i`` sits at ``a_i + (b_i - a_i) * k / (n_i + 1)``
    for ``k = 1..n_i``; indices 0 and ``n_i + 1`` are the boundary.
    """

    extents: tuple[tuple[float, float], ...]
    nodes: tuple[int, ...]

    def __post_init__(self):
        extents = tuple((float(a), float(b)) for a, b in self.extents)
        nodes = tuple(int(n) for n in self.nodes)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "nodes", nodes)
        if len(extents) != len(nodes) or len(nodes) not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2 with one extent per axis")
        for (a, b), n in zip(extents, nodes):
            if not b > a:
                raise ValueError(f"empty extent [{a}, {b}]")
            if n < 1:
                raise ValueError("need at least one interior node per axis")

    @classmethod
    def interval(cls, n: int, a: float = 0.0, b: float = 1.0) -> "Grid":
        return cls(((a, b),), (n,))

    @classmethod
    def rectangle(cls, nx: int, ny: int, x_extent=(0.0, 1.0), y_extent=(0.0, 1.0)) -> "Grid":
        return cls((tuple(x_extent), tuple(y_extent)), (nx, ny))

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (n + 1) for (a, b), n in zip(self.extents, self.nodes))

    def axis_coords(self, axis: int, include_boundary: bool = False) -> np.ndarray:
        (a, b), n = self.extents[axis], self.nodes[axis]
        k = np.arange(n + 2) if include_boundary else np.arange(1, n + 1)
        return a + (b - a) * k / (n + 1)

    @cached_property
    def points(self) -> np.ndarray:
        """Interior node coordinates, shape ``(size, dim)`` in C order."""
        return self._mesh(False)

    @cached_property
    def all_points(self) -> np.ndarray:
        """Coordinates including the boundary layer, shape ``(prod(n_i+2), dim)``."""
        return self._mesh(True)

    def _mesh(self, include_boundary):
        axes = [self.axis_coords(i, include_boundary) for i in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts.setflags(write=False)
        return pts

    def node_coords(self, node: Sequence[int]) -> np.ndarray:
        """Coordinates of the interior node with 0-based interior index ``node``."""
        node = _as_node(node, self.dim)
        return np.array([self.axis_coords(i)[node[i]] for i in range(self.dim)])

    def flat_index(self, node: Sequence[int]) -> int:
        return int(np.ravel_multi_index(_as_node(node, self.dim), self.shape))

    def refine(self) -> "Grid":
        """Halve the spacing: ``n -> 2n + 1`` interior nodes per axis."""
        return Grid(self.extents, tuple(2 * n + 1 for n in self.nodes))


def _as_node(node, dim) -> tuple[int, ...]:
    if np.isscalar(node):
        node = (node,)
    node = tuple(int(i) for i in node)
    if len(node) != dim:
        raise ValueError(f"node index {node} does not match grid dimension {dim}")
    return node


class GridFunction:
    """Real values on the interior nodes of a :class:`Grid`, zero on the boundary.

    Instances are immutable; arithmetic returns new objects.
    """

    __slots__ = ("grid", "_values")

    def __init__(self, grid: Grid, values):
        v = np.array(values, dtype=float)
        if v.size != grid.size:
            raise ValueError(f"expected {grid.size} values, got {v.size}")
        v = v.reshape(grid.shape)
        v.setflags(write=False)
        self.grid = grid
        self._values = v

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "GridFunction":
        """Sample ``func(points)`` (points of shape ``(size, dim)``) at interior nodes."""
        return cls(grid, np.asarray(func(grid.points), dtype=float))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def flat(self) -> np.ndarray:
        return self._values.ravel()

    def full(self) -> np.ndarray:
        """Values including the zero boundary layer."""
        return np.pad(self._values, 1)

    def __getitem__(self, node):
        return float(self._values[_as_node(node, self.grid.dim)])

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self._values)))

    def _coerce(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise ValueError("grid mismatch")
            return other._values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self._values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self._values - self._coerce(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._coerce(other) - self._values)

    def __mul__(self, s):
        return GridFunction(self.grid, self._values * s)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self._values)

    def __eq__(self, other):
        return (isinstance(other, GridFunction) and other.grid == self.grid
                and np.array_equal(other._values, self._values))

    def __repr__(self):
        return f"GridFunction(shape={self.grid.shape}, max|u|={self.norm_inf():.3g})"

    def csv_rows(self) -> Iterable[list[str]]:
        for pt, v in zip(self.grid.points, self.flat):
            yield [_fmt(c) for c in pt] + [_fmt(v)]

    def to_csv(self, path) -> None:
        """Write ``x[,y],value`` with 17 significant digits."""
        header = ["x", "y"][: self.grid.dim] + ["value"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(self.csv_rows())

    @classmethod
    def from_csv(cls, grid: Grid, path) -> "GridFunction":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))[1:]
        return cls(grid, [float(r[-1]) for r in rows])


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# stencil frames


Direction = tuple[int, ...]


@dataclass(frozen=True)
class StencilFrame:
    """Sets of mutually orthogonal lattice directions.

    The discrete Pucci operators maximize (minimize) over frames. In 2D the
    narrow set is the axis frame plus the diagonal frame; the wide set adds
    the ``(2, 1)``-type frames.
    """

    frames: tuple[tuple[Direction, ...], ...]

    @classmethod
    def narrow(cls, grid: Grid) -> "StencilFrame":
        if grid.dim == 1:
            return cls((((1,),),))
        frames = [((1, 0), (0, 1))]
        if _orthogonal(grid, (1, 1), (1, -1)):
            frames.append(((1, 1), (1, -1)))
        return cls(tuple(frames))

    @classmethod
    def wide(cls, grid: Grid) -> "StencilFrame":
        base = cls.narrow(grid)
        if grid.dim == 1:
            return base
        extra = [((2, 1), (-1, 2)), ((1, 2), (-2, 1))]
        return cls(base.frames + tuple(f for f in extra if _orthogonal(grid, *f)))

    @classmethod
    def named(cls, name: str, grid: Grid) -> "StencilFrame":
        if name == "narrow":
            return cls.narrow(grid)
        if name == "wide":
            return cls.wide(grid)
        raise ValueError(f"unknown frame set {name!r}")

    def validate(self, grid: Grid) -> None:
        for frame in self.frames:
            if len(frame) != grid.dim:
                raise ValueError(f"frame {frame} does not span dimension {grid.dim}")
            for e in frame:
                if len(e) != grid.dim or not any(e):
                    raise ValueError(f"bad lattice direction {e}")
            for e, f in itertools.combinations(frame, 2):
                if not _orthogonal(grid, e, f):
                    raise ValueError(f"directions {e} and {f} are not orthogonal on this grid")

    @property
    def directions(self) -> tuple[Direction, ...]:
        seen = []
        for frame in self.frames:
            for e in frame:
                if e not in seen:
                    seen.append(e)
        return tuple(seen)

    @property
    def reach(self) -> int:
        return max(max(abs(c) for c in e) for e in self.directions)


def _physical(grid: Grid, e: Sequence[int]) -> np.ndarray:
    return np.asarray(e, dtype=float) * np.asarray(grid.spacing)


def _orthogonal(grid, e, f) -> bool:
    a, b = _physical(grid, e), _physical(grid, f)
    return abs(a @ b) <= 1e-12 * np.linalg.norm(a) * np.linalg.norm(b)


# ---------------------------------------------------------------------------
# sparse stencils


class Stencils:
    """Sparse difference matrices on the flattened interior of ``grid``.

    All matrices act on interior values and use the zero boundary layer.
    Second differences along a direction whose arm leaves the domain are
    taken on the shortened arm ending at the boundary (value 0), which keeps
    them monotone.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self._cache: dict = {}

    def _index_arrays(self):
        idx = np.indices(self.grid.shape).reshape(self.grid.dim, -1).T
        return idx

    def second_difference(self, e: Direction) -> sp.csr_matrix:
        key = ("d2", tuple(e))
        if key not in self._cache:
            self._cache[key] = self._build_second(tuple(e))
        return self._cache[key]

    def center_weight(self, e: Direction) -> np.ndarray:
        """Magnitude of the diagonal entry of :meth:`second_difference` per node."""
        key = ("cw", tuple(e))
        if key not in self._cache:
            self._cache[key] = -self.second_difference(e).diagonal()
        return self._cache[key]

    def _arm(self, idx: np.ndarray, e: np.ndarray):
        """Neighbor flat index (or -1) and arm fraction for each node."""
        g = self.grid
        n = np.asarray(g.nodes)
        pos = idx + 1  # position in the padded index space 0..n+1
        theta = np.ones(len(idx))
        for a in range(g.dim):
            if e[a] > 0:
                theta = np.minimum(theta, (n[a] + 1 - pos[:, a]) / e[a])
            elif e[a] < 0:
                theta = np.minimum(theta, pos[:, a] / -e[a])
        tgt = idx + e
        inside = np.all((tgt >= 0) & (tgt < n), axis=1) & (theta >= 1.0)
        flat = np.full(len(idx), -1)
        if inside.any():
            flat[inside] = np.ravel_multi_index(tuple(tgt[inside].T), g.shape)
        return flat, theta

    def _build_second(self, e):
        g = self.grid
        idx = self._index_arrays()
        ev = np.asarray(e)
        L2 = float(_physical(g, e) @ _physical(g, e))
        fp, tp = self._arm(idx, ev)
        fm, tm = self._arm(idx, -ev)
        rows = np.arange(g.size)
        center = -2.0 / (tp * tm * L2)
        wp = 2.0 / ((tp + tm) * tp * L2)
        wm = 2.0 / ((tp + tm) * tm * L2)
        r = [rows, rows[fp >= 0], rows[fm >= 0]]
        c = [rows, fp[fp >= 0], fm[fm >= 0]]
        v = [center, wp[fp >= 0], wm[fm >= 0]]
        return sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                             shape=(g.size, g.size))

    def _shift(self, e) -> sp.csr_matrix:
        """Matrix sampling ``u(x + e)`` with zero outside the interior."""
        key = ("shift", tuple(e))
        if key not in self._cache:
            g = self.grid
            idx = self._index_arrays()
            tgt = idx + np.asarray(e)
            inside = np.all((tgt >= 0) & (tgt < np.asarray(g.nodes)), axis=1)
            rows = np.arange(g.size)[inside]
            cols = np.ravel_multi_index(tuple(tgt[inside].T), g.shape)
            self._cache[key] = sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                                             shape=(g.size, g.size))
        return self._cache[key]

    def _unit(self, axis, step=1):
        e = [0] * self.grid.dim
        e[axis] = step
        return tuple(e)

    def backward(self, axis: int) -> sp.csr_matrix:
        """``(u(x) - u(x - dx_a)) / dx_a``."""
        key = ("bw", axis)
        if key not in self._cache:
            dx = self.grid.spacing[axis]
            eye = sp.identity(self.grid.size, format="csr")
            self._cache[key] = ((eye - self._shift(self._unit(axis, -1))) / dx).tocsr()
        return self._cache[key]

    def forward(self, axis: int) -> sp.csr_matrix:
        """``(u(x + dx_a) - u(x)) / dx_a``."""
        key = ("fw", axis)
        if key not in self._cache:
            dx = self.grid.spacing[axis]
            eye = sp.identity(self.grid.size, format="csr")
            self._cache[key] = ((self._shift(self._unit(axis, 1)) - eye) / dx).tocsr()
        return self._cache[key]

    def centered_first(self, axis: int) -> sp.csr_matrix:
        key = ("c1", axis)
        if key not in self._cache:
            self._cache[key] = (0.5 * (self.forward(axis) + self.backward(axis))).tocsr()
        return self._cache[key]

    def hessian_entry(self, a: int, b: int) -> sp.csr_matrix:
        """Centered approximation of ``d^2 u / dx_a dx_b``."""
        a, b = min(a, b), max(a, b)
        key = ("hess", a, b)
        if key not in self._cache:
            if a == b:
                mat = self.second_difference(self._unit(a))
            else:
                dx, dy = self.grid.spacing[a], self.grid.spacing[b]
                pp = [0] * self.grid.dim
                pp[a], pp[b] = 1, 1
                pm = [0] * self.grid.dim
                pm[a], pm[b] = 1, -1
                mp = [-c for c in pm]
                mm = [-c for c in pp]
                mat = (self._shift(tuple(pp)) - self._shift(tuple(pm)) - self._shift(tuple(mp))
                       + self._shift(tuple(mm))) / (4.0 * dx * dy)
            self._cache[key] = mat.tocsr()
        return self._cache[key]

    def hessians(self, u: np.ndarray) -> np.ndarray:
        """Centered Hessians at every node, shape ``(size, d, d)``."""
        d = self.grid.dim
        H = np.empty((self.grid.size, d, d))
        for a in range(d):
            for b in range(a, d):
                H[:, a, b] = H[:, b, a] = self.hessian_entry(a, b) @ u
        return H

    def gradients(self, u: np.ndarray) -> np.ndarray:
        return np.stack([self.centered_first(a) @ u for a in range(self.grid.dim)], axis=1)


_STENCIL_CACHE: dict[Grid, Stencils] = {}


def stencils_for(grid: Grid) -> Stencils:
    st = _STENCIL_CACHE.get(grid)
    if st is None:
        st = _STENCIL_CACHE[grid] = Stencils(grid)
    return st


# ---------------------------------------------------------------------------
# upwind gradient norm


def upwind_parts(st: Stencils, u: np.ndarray, sign: int):
    """Per-axis upwind slopes and the branch selected at every node.

    ``sign=+1``: ``m_a = max(D_a^- u, -D_a^+ u, 0)``; ``+gamma*|m|`` is monotone.
    ``sign=-1``: ``m_a = max(-D_a^- u, D_a^+ u, 0)``; ``-gamma*|m|`` is monotone.
    """
    slopes, branches = [], []
    for a in range(st.grid.dim):
        bw = st.backward(a) @ u
        fw = st.forward(a) @ u
        cand = np.stack([sign * bw, -sign * fw, np.zeros_like(bw)])
        br = np.argmax(cand, axis=0)
        slopes.append(np.take_along_axis(cand, br[None], 0)[0])
        branches.append(br)
    return np.stack(slopes, axis=1), np.stack(branches, axis=1)


def upwind_norm_and_jacobian(st: Stencils, u: np.ndarray, sign: int, jacobian: bool = True):
    m, br = upwind_parts(st, u, sign)
    norm = np.sqrt(np.sum(m * m, axis=1))
    if not jacobian:
        return norm, None
    n = st.grid.size
    jac = sp.csr_matrix((n, n))
    safe = np.where(norm > 0, norm, 1.0)
    for a in range(st.grid.dim):
        w = np.where(norm > 0, m[:, a] / safe, 0.0)
        wb = np.where(br[:, a] == 0, w * sign, 0.0)
        wf = np.where(br[:, a] == 1, -w * sign, 0.0)
        jac = jac + sp.diags(wb) @ st.backward(a) + sp.diags(wf) @ st.forward(a)
    return norm, jac.tocsr()


# ---------------------------------------------------------------------------
# pointwise quotients


def _row(mat: sp.csr_matrix, u: GridFunction, node) -> float:
    k = u.grid.flat_index(node)
    return float((mat.getrow(k) @ u.flat)[0])


def directional_second_difference(u: GridFunction, x, e: Sequence[int]) -> float:
    """``(u(x + De) - 2u(x) + u(x - De)) / |De|^2`` with the zero boundary extension."""
    e = tuple(int(c) for c in e)
    if len(e) != u.grid.dim or not any(e):
        raise ValueError(f"bad lattice direction {e}")
    return _row(stencils_for(u.grid).second_difference(e), u, x)


def discrete_hessian(u: GridFunction, x) -> SymMatrix:
    """Centered Hessian at an interior node (4-point cross difference off the diagonal)."""
    st = stencils_for(u.grid)
    d = u.grid.dim
    H = np.empty((d, d))
    for a in range(d):
        for b in range(a, d):
            H[a, b] = H[b, a] = _row(st.hessian_entry(a, b), u, x)
    return SymMatrix(H)


def centered_gradient(u: GridFunction, x) -> np.ndarray:
    st = stencils_for(u.grid)
    return np.array([_row(st.centered_first(a), u, x) for a in range(u.grid.dim)])


def upwind_gradient_norm(u: GridFunction, x, sign: int = 1) -> float:
    """Monotone approximation of ``|Du|`` at ``x`` (see :func:`upwind_parts`)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    st = stencils_for(u.grid)
    k = u.grid.flat_index(x)
    norm, _ = upwind_norm_and_jacobian(st, u.flat, sign, jacobian=False)
    return float(norm[k])


def _pucci_phi(s, lam, Lam, sign):
    if sign > 0:
        return -lam * max(s, 0.0) + Lam * max(-s, 0.0)
    return -Lam * max(s, 0.0) + lam * max(-s, 0.0)


def discrete_pucci_plus(u: GridFunction, x, lam: float, Lam: float,
                        frames: StencilFrame | None = None) -> float:
    """Max over frames of ``sum_i phi(s_i)``, ``phi(s) = -lam s+ + Lam s-``."""
    frames = frames or StencilFrame.narrow(u.grid)
    frames.validate(u.grid)
    return max(sum(_pucci_phi(directional_second_difference(u, x, e), lam, Lam, 1) for e in fr)
               for fr in frames.frames)


def discrete_pucci_minus(u: GridFunction, x, lam: float, Lam: float,
                         frames: StencilFrame | None = None) -> float:
    """Min over frames of ``sum_i psi(s_i)``, ``psi(s) = -Lam s+ + lam s-``."""
    frames = frames or StencilFrame.narrow(u.grid)
    frames.validate(u.grid)
    return min(sum(_pucci_phi(directional_second_difference(u, x, e), lam, Lam, -1) for e in fr)
               for fr in frames.frames)


def assemble_residual(F, z: GridFunction, z_prev: GridFunction, h: float, t: float,
                      mode: str = "monotone", frames: StencilFrame | None = None) -> GridFunction:
    """``R(z) = F_h(z) + z/h - z_prev/h`` at every interior node.

    ``R == 0`` characterizes the implicit step solution at time ``t``.
    """
    from .discretize import discretize

    if h <= 0:
        raise ValueError("time step h must be positive")
    if z.grid != z_prev.grid:
        raise ValueError("grid mismatch between z and z_prev")
    disc = discretize(F, z.grid, frames=frames, mode=mode)
    vals = disc.evaluate(z.flat, t) + (z.flat - z_prev.flat) / h
    return GridFunction(z.grid, vals)


def min_spacing(grid: Grid) -> float:
    return min(grid.spacing)


def diameter(grid: Grid) -> float:
    return math.sqrt(sum((b - a) ** 2 for a, b in grid.extents))
