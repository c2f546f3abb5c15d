"""Fully nonlinear elliptic operators F(M, p, r, x, t).

The sign convention is the one for which the *negative* Laplacian is
admissible: adding a positive semidefinite matrix to ``M`` decreases ``F``.

Contents
--------
* :class:`SymMatrix` and the Pucci extremal operators
  :func:`pucci_plus` / :func:`pucci_minus`.
* :class:`EllipticOperator` and the catalog entries
  :class:`LinearOperator`, :class:`PucciOperator`, :class:`BellmanOperator`
  and :class:`CustomOperator`.
* Randomized validators :func:`check_uniform_ellipticity` and
  :func:`check_structure_condition`.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SymMatrix",
    "pucci_plus",
    "pucci_minus",
    "Forcing",
    "EllipticOperator",
    "LinearOperator",
    "PucciOperator",
    "Control",
    "BellmanOperator",
    "CustomOperator",
    "ValidationReport",
    "check_uniform_ellipticity",
    "check_structure_condition",
    "evaluate_operator",
    "make_operator",
    "register_operator",
    "OPERATOR_CATALOG",
]


class SymMatrix:
    """Immutable real symmetric d x d matrix, d in {1, 2, 3}.

    Symmetry is checked exactly; ``SymMatrix([[0, 1], [1.0000001, 0]])``
    raises.
    """

    __slots__ = ("_a",)

    def __init__(self, entries):
        if isinstance(entries, SymMatrix):
            a = entries._a
        else:
            a = np.array(entries, dtype=float)
            if a.ndim == 0:
                a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not 1 <= a.shape[0] <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {a.shape[0]}")
        if not np.array_equal(a, a.T):
            raise ValueError("matrix is not symmetric")
        a = a.copy()
        a.setflags(write=False)
        self._a = a

    @classmethod
    def diag(cls, *values: float) -> "SymMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def zeros(cls, d: int) -> "SymMatrix":
        return cls(np.zeros((d, d)))

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._a

    def __array__(self, dtype=None, copy=None):
        return self._a if dtype is None else self._a.astype(dtype)

    def eigvalsh(self) -> np.ndarray:
        """Eigenvalues in ascending order."""
        return np.linalg.eigvalsh(self._a)

    def positive_part(self) -> "SymMatrix":
        w, v = np.linalg.eigh(self._a)
        return SymMatrix(_symmetrize((v * np.maximum(w, 0.0)) @ v.T))

    def negative_part(self) -> "SymMatrix":
        w, v = np.linalg.eigh(self._a)
        return SymMatrix(_symmetrize((v * np.maximum(-w, 0.0)) @ v.T))

    def trace(self) -> float:
        return float(np.trace(self._a))

    def __add__(self, other):
        return SymMatrix(self._a + np.asarray(other))

    def __sub__(self, other):
        return SymMatrix(self._a - np.asarray(other))

    def __neg__(self):
        return SymMatrix(-self._a)

    def __mul__(self, s: float):
        return SymMatrix(self._a * float(s))

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, SymMatrix) and np.array_equal(self._a, other._a)

    def __hash__(self):
        return hash(self._a.tobytes())

    def __repr__(self):
        return f"SymMatrix({self._a.tolist()!r})"


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _as_sym(M) -> SymMatrix:
    return M if isinstance(M, SymMatrix) else SymMatrix(M)


def _check_ellipticity_constants(lam: float, Lam: float) -> None:
    if not (lam > 0 and Lam >= lam):
        raise ValueError(f"need 0 < lambda <= Lambda, got {lam}, {Lam}")


def pucci_plus(M, lam: float, Lam: float) -> float:
    """Maximal Pucci operator ``-lam*Tr(M+) + Lam*Tr(M-)``.

    >>> pucci_plus([[1.0, 0.0], [0.0, -2.0]], 1.0, 2.0)
    3.0
    """
    _check_ellipticity_constants(lam, Lam)
    w = _as_sym(M).eigvalsh()
    return float(-lam * w[w > 0].sum() - Lam * w[w < 0].sum())


def pucci_minus(M, lam: float, Lam: float) -> float:
    """Minimal Pucci operator ``-Lam*Tr(M+) + lam*Tr(M-)``."""
    _check_ellipticity_constants(lam, Lam)
    w = _as_sym(M).eigvalsh()
    return float(-Lam * w[w > 0].sum() - lam * w[w < 0].sum())


def pucci_values(eigenvalues: np.ndarray, lam: float, Lam: float, sign: int) -> np.ndarray:
    """Vectorized Pucci operator from eigenvalues along the last axis."""
    pos = np.where(eigenvalues > 0, eigenvalues, 0.0).sum(axis=-1)
    neg = np.where(eigenvalues < 0, -eigenvalues, 0.0).sum(axis=-1)
    if sign > 0:
        return -lam * pos + Lam * neg
    return -Lam * pos + lam * neg


# ---------------------------------------------------------------------------
# forcing terms


_EXPR_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "sinh": np.sinh,
    "cosh": np.cosh, "minimum": np.minimum, "maximum": np.maximum,
}
_EXPR_CONSTS = {"pi": math.pi, "e": math.e}
_EXPR_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub,
    ast.UAdd, ast.Mod,
)


class Forcing:
    """Source term ``f(x, t)`` evaluated on arrays of points.

    Parameters
    ----------
    func : callable
        ``func(x, t)`` with ``x`` of shape ``(n, d)``; returns shape ``(n,)``.
    time_independent : bool
        Whether ``func`` ignores ``t``.
    sigma2 : callable, optional
        Exact time modulus ``h -> sup_{x,t} |f(x, t+h) - f(x, t)|``. When
        absent it is estimated by sampling (see :meth:`time_modulus`).
    description : str
        Human readable form, also used when serializing configs.
    """

    def __init__(self, func, *, time_independent=False, sigma2=None, description=""):
        self._func = func
        self.time_independent = bool(time_independent)
        self._sigma2 = sigma2
        self.description = description

    @classmethod
    def zero(cls) -> "Forcing":
        return cls(lambda x, t: np.zeros(len(x)), time_independent=True,
                   sigma2=lambda h: 0.0, description="0")

    @classmethod
    def constant(cls, value: float) -> "Forcing":
        value = float(value)
        return cls(lambda x, t: np.full(len(x), value), time_independent=True,
                   sigma2=lambda h: 0.0, description=repr(value))

    @classmethod
    def from_expression(cls, expr: str, dim: int) -> "Forcing":
        """Compile an arithmetic expression in ``x`` (``y``) and ``t``.

        Only arithmetic, the functions in ``_EXPR_FUNCS`` and the constants
        ``pi`` and ``e`` are accepted.
        """
        tree = ast.parse(expr.strip(), mode="eval")
        variables = {"x", "t"} | ({"y"} if dim >= 2 else set())
        names = set()
        for node in ast.walk(tree):
            if not isinstance(node, _EXPR_NODES):
                raise ValueError(f"unsupported syntax in forcing expression: {expr!r}")
            if isinstance(node, ast.Call) and not (
                isinstance(node.func, ast.Name) and node.func.id in _EXPR_FUNCS
            ):
                raise ValueError(f"unsupported function call in {expr!r}")
            if isinstance(node, ast.Name):
                names.add(node.id)
        unknown = names - variables - set(_EXPR_FUNCS) - set(_EXPR_CONSTS)
        if unknown:
            raise ValueError(f"unknown names {sorted(unknown)} in {expr!r}")
        code = compile(tree, "<forcing>", "eval")

        def func(x, t):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            env = dict(_EXPR_FUNCS, **_EXPR_CONSTS)
            env["x"] = x[:, 0]
            if dim >= 2:
                env["y"] = x[:, 1]
            env["t"] = float(t)
            out = eval(code, {"__builtins__": {}}, env)
            return np.broadcast_to(np.asarray(out, dtype=float), (len(x),)).copy()

        return cls(func, time_independent="t" not in names, description=expr.strip())

    def __call__(self, x, t: float) -> np.ndarray:
        return np.asarray(self._func(np.atleast_2d(x), t), dtype=float)

    def time_modulus(self, h: float, dim: int = 1, horizon: float = 1.0,
                     box: Sequence[tuple[float, float]] | None = None,
                     samples: int = 41) -> float:
        """``sigma_2(h)``: exact when provided, else a sampled estimate."""
        if self.time_independent or h == 0:
            return 0.0
        if self._sigma2 is not None:
            return float(self._sigma2(h))
        box = box or [(0.0, 1.0)] * dim
        axes = [np.linspace(a, b, samples) for a, b in box]
        pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        worst = 0.0
        for t in np.linspace(0.0, horizon, samples):
            worst = max(worst, float(np.max(np.abs(self(pts, t + h) - self(pts, t)))))
        return worst


def _as_forcing(f, dim: int) -> Forcing:
    if f is None:
        return Forcing.zero()
    if isinstance(f, Forcing):
        return f
    if isinstance(f, str):
        return Forcing.from_expression(f, dim)
    if isinstance(f, (int, float)):
        return Forcing.constant(f)
    if callable(f):
        return Forcing(f)
    raise TypeError(f"cannot interpret {f!r} as a forcing term")


# ---------------------------------------------------------------------------
# operators


class EllipticOperator:
    """Base class for ``F(M, p, r, x, t)`` together with its structure constants.

    Subclasses implement :meth:`evaluate`. ``lam``/``Lam`` are the
    ellipticity constants, ``gamma`` the Lipschitz constant in the gradient
    and :meth:`omega` the zeroth-order modulus. :meth:`sigma2` is the time
    modulus of ``x -> F(0, 0, 0, x, t)``.
    """

    dim: int = 1
    lam: float = 1.0
    Lam: float = 1.0
    gamma: float = 0.0
    r_lipschitz: float = 0.0
    forcing: Forcing

    @property
    def time_independent(self) -> bool:
        return self.forcing.time_independent

    def evaluate(self, M, p, r, x, t) -> float:
        raise NotImplementedError

    def __call__(self, M, p, r, x, t) -> float:
        return self.evaluate(M, p, r, x, t)

    def omega(self, R: float, s: float) -> float:
        """Modulus in the zeroth-order argument; ``R`` bounds ``|r|, |s|``."""
        return self.r_lipschitz * max(float(s), 0.0)

    def sigma2(self, h: float, horizon: float = 1.0) -> float:
        return self.forcing.time_modulus(h, dim=self.dim, horizon=horizon)

    def zeroth_order(self, x: np.ndarray, t: float) -> np.ndarray:
        """``f(x) = F(0, 0, 0, x, t)`` at every row of ``x``."""
        x = np.atleast_2d(x)
        zero_m = np.zeros((self.dim, self.dim))
        zero_p = np.zeros(self.dim)
        return np.array([self.evaluate(zero_m, zero_p, 0.0, xi, t) for xi in x])

    def evaluate_many(self, M: np.ndarray, p: np.ndarray, r: np.ndarray,
                      x: np.ndarray, t: float) -> np.ndarray:
        """Evaluate at ``n`` points; ``M`` has shape ``(n, d, d)``."""
        return np.array([self.evaluate(M[i], p[i], r[i], x[i], t) for i in range(len(r))])


def _linear_value(A, b, c, M, p, r):
    return -float(np.sum(A * M)) + float(np.dot(b, p)) + c * float(r)


class LinearOperator(EllipticOperator):
    """``F = -Tr(A M) + b.p + c r + f(x, t)`` with constant coefficients."""

    def __init__(self, A, b=None, c: float = 0.0, forcing=None):
        A = SymMatrix(A)
        self.dim = A.dim
        self.A = A.entries
        self.b = np.zeros(self.dim) if b is None else np.asarray(b, dtype=float).reshape(self.dim)
        if c < 0:
            raise ValueError("zeroth-order coefficient c must be nonnegative")
        self.c = float(c)
        w = A.eigvalsh()
        if w[0] <= 0:
            raise ValueError("coefficient matrix must be positive definite")
        self.lam, self.Lam = float(w[0]), float(w[-1])
        self.gamma = float(np.linalg.norm(self.b))
        self.r_lipschitz = self.c
        self.forcing = _as_forcing(forcing, self.dim)

    def evaluate(self, M, p, r, x, t) -> float:
        M = np.asarray(M, dtype=float).reshape(self.dim, self.dim)
        p = np.asarray(p, dtype=float).reshape(self.dim)
        f = self.forcing(np.asarray(x, dtype=float).reshape(1, self.dim), t)[0]
        return _linear_value(self.A, self.b, self.c, M, p, r) + f

    def zeroth_order(self, x, t):
        return self.forcing(np.atleast_2d(x), t)

    def evaluate_many(self, M, p, r, x, t):
        return (-np.einsum("nij,ij->n", M, self.A) + p @ self.b + self.c * np.asarray(r)
                + self.forcing(x, t))

    def __repr__(self):
        return f"LinearOperator(A={self.A.tolist()}, b={self.b.tolist()}, c={self.c}, f={self.forcing.description!r})"


class PucciOperator(EllipticOperator):
    """``F = P^{sign}(M) + sign*gamma|p| + c r + f(x, t)``.

    ``sign=+1`` gives the maximal operator with ``+gamma|p|``, ``sign=-1``
    the minimal one with ``-gamma|p|``; both are extremal within their
    structure class.
    """

    def __init__(self, lam: float, Lam: float, sign: int = 1, gamma: float = 0.0,
                 c: float = 0.0, forcing=None, dim: int = 1):
        _check_ellipticity_constants(lam, Lam)
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if gamma < 0 or c < 0:
            raise ValueError("gamma and c must be nonnegative")
        self.dim = int(dim)
        self.lam, self.Lam = float(lam), float(Lam)
        self.sign = sign
        self.gamma = float(gamma)
        self.c = float(c)
        self.r_lipschitz = self.c
        self.forcing = _as_forcing(forcing, self.dim)

    def evaluate(self, M, p, r, x, t) -> float:
        M = np.asarray(M, dtype=float).reshape(self.dim, self.dim)
        w = np.linalg.eigvalsh(_symmetrize(M))
        value = float(pucci_values(w, self.lam, self.Lam, self.sign))
        value += self.sign * self.gamma * float(np.linalg.norm(np.asarray(p, dtype=float)))
        f = self.forcing(np.asarray(x, dtype=float).reshape(1, self.dim), t)[0]
        return value + self.c * float(r) + f

    def zeroth_order(self, x, t):
        return self.forcing(np.atleast_2d(x), t)

    def evaluate_many(self, M, p, r, x, t):
        w = np.linalg.eigvalsh(_symmetrize_stack(M))
        return (pucci_values(w, self.lam, self.Lam, self.sign)
                + self.sign * self.gamma * np.linalg.norm(p, axis=1)
                + self.c * np.asarray(r) + self.forcing(x, t))

    def __repr__(self):
        kind = "plus" if self.sign > 0 else "minus"
        return (f"PucciOperator({kind}, lam={self.lam}, Lam={self.Lam}, gamma={self.gamma}, "
                f"c={self.c}, f={self.forcing.description!r})")


def _symmetrize_stack(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, -1, -2))


@dataclass(frozen=True)
class Control:
    """One linear branch ``-Tr(A M) + b.p + c r + f(x, t)`` of a Bellman operator."""

    A: np.ndarray
    b: np.ndarray
    c: float
    forcing: Forcing = field(default_factory=Forcing.zero)

    @classmethod
    def make(cls, A, b=None, c: float = 0.0, forcing=None) -> "Control":
        A = SymMatrix(A).entries
        d = A.shape[0]
        b = np.zeros(d) if b is None else np.asarray(b, dtype=float).reshape(d)
        return cls(A, b, float(c), _as_forcing(forcing, d))


class BellmanOperator(EllipticOperator):
    """``F = sup_k L_k`` (or ``inf_k``) over finitely many linear controls.

    Constructor checks that every ``A_k`` has spectrum in ``[lam, Lam]`` and
    every ``c_k >= 0``. When ``lam``/``Lam`` are omitted they are taken as
    the extreme eigenvalues over all controls.
    """

    def __init__(self, controls: Sequence[Control], combiner: str = "sup",
                 lam: float | None = None, Lam: float | None = None):
        if not controls:
            raise ValueError("Bellman operator needs at least one control")
        if combiner not in ("sup", "inf"):
            raise ValueError("combiner must be 'sup' or 'inf'")
        self.controls = tuple(c if isinstance(c, Control) else Control.make(**c) for c in controls)
        self.dim = self.controls[0].A.shape[0]
        eigs = []
        for k, ctrl in enumerate(self.controls):
            if ctrl.A.shape != (self.dim, self.dim):
                raise ValueError(f"control {k} has mismatched dimension")
            if ctrl.c < 0:
                raise ValueError(f"control {k} has negative zeroth-order coefficient")
            eigs.append(np.linalg.eigvalsh(ctrl.A))
        eigs = np.concatenate(eigs)
        self.lam = float(eigs.min()) if lam is None else float(lam)
        self.Lam = float(eigs.max()) if Lam is None else float(Lam)
        _check_ellipticity_constants(self.lam, self.Lam)
        tol = 1e-12 * max(1.0, self.Lam)
        if eigs.min() < self.lam - tol or eigs.max() > self.Lam + tol:
            raise ValueError("control coefficient spectrum outside [lambda, Lambda]")
        self.combiner = combiner
        self.gamma = max(float(np.linalg.norm(c.b)) for c in self.controls)
        self.r_lipschitz = max(c.c for c in self.controls)
        self._ti = all(c.forcing.time_independent for c in self.controls)

    @property
    def time_independent(self) -> bool:
        return self._ti

    @property
    def forcing(self) -> Forcing:
        # F(0,0,0,x,t) as its own forcing object
        pick = np.max if self.combiner == "sup" else np.min
        ctrls = self.controls

        def f(x, t):
            return pick(np.stack([c.forcing(x, t) for c in ctrls]), axis=0)

        def sigma2(h):
            mods = [c.forcing.time_modulus(h, dim=self.dim) for c in ctrls]
            return max(mods)

        exact = all(c.forcing._sigma2 is not None or c.forcing.time_independent for c in ctrls)
        return Forcing(f, time_independent=self._ti, sigma2=sigma2 if exact else None,
                       description=f"{self.combiner}_k f_k")

    def sigma2(self, h: float, horizon: float = 1.0) -> float:
        # sup/inf of the forcings has modulus at most the max of the moduli
        return max(c.forcing.time_modulus(h, dim=self.dim, horizon=horizon) for c in self.controls)

    def control_values(self, M, p, r, x, t) -> np.ndarray:
        M = np.asarray(M, dtype=float).reshape(self.dim, self.dim)
        p = np.asarray(p, dtype=float).reshape(self.dim)
        xx = np.asarray(x, dtype=float).reshape(1, self.dim)
        return np.array([_linear_value(c.A, c.b, c.c, M, p, r) + c.forcing(xx, t)[0]
                         for c in self.controls])

    def evaluate(self, M, p, r, x, t) -> float:
        vals = self.control_values(M, p, r, x, t)
        return float(vals.max() if self.combiner == "sup" else vals.min())

    def zeroth_order(self, x, t):
        vals = np.stack([c.forcing(np.atleast_2d(x), t) for c in self.controls])
        return vals.max(axis=0) if self.combiner == "sup" else vals.min(axis=0)

    def evaluate_many(self, M, p, r, x, t):
        vals = np.stack([
            -np.einsum("nij,ij->n", M, c.A) + p @ c.b + c.c * np.asarray(r) + c.forcing(x, t)
            for c in self.controls
        ])
        return vals.max(axis=0) if self.combiner == "sup" else vals.min(axis=0)

    def __repr__(self):
        return f"BellmanOperator({len(self.controls)} controls, {self.combiner})"


class CustomOperator(EllipticOperator):
    """Wrap a user function ``func(M, p, r, x, t)`` with declared constants.

    The discretization of a custom operator evaluates ``func`` pointwise on
    centered difference quotients; monotonicity of that scheme is the
    caller's responsibility.
    """

    def __init__(self, func: Callable, dim: int, lam: float, Lam: float,
                 gamma: float = 0.0, omega: Callable | None = None,
                 sigma2: Callable | None = None, time_independent: bool = False,
                 r_lipschitz: float = 0.0):
        _check_ellipticity_constants(lam, Lam)
        self.func = func
        self.dim = int(dim)
        self.lam, self.Lam = float(lam), float(Lam)
        self.gamma = float(gamma)
        self.r_lipschitz = float(r_lipschitz)
        self._omega = omega
        zero = np.zeros((self.dim, self.dim))
        zp = np.zeros(self.dim)
        self.forcing = Forcing(
            lambda x, t: np.array([func(zero, zp, 0.0, xi, t) for xi in np.atleast_2d(x)]),
            time_independent=time_independent,
            sigma2=sigma2,
        )

    def evaluate(self, M, p, r, x, t) -> float:
        return float(self.func(np.asarray(M, dtype=float), np.asarray(p, dtype=float),
                               float(r), np.asarray(x, dtype=float), float(t)))

    def omega(self, R, s):
        if self._omega is not None:
            return float(self._omega(R, s))
        return super().omega(R, s)


def evaluate_operator(F: EllipticOperator, M, p, r, x, t) -> float:
    """Evaluate ``F`` after checking that the argument dimensions agree."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = F.dim
    if M.shape != (d, d) or p.shape != (d,) or x.shape != (d,):
        raise ValueError(
            f"dimension mismatch: operator has d={d}, got M{M.shape}, p{p.shape}, x{x.shape}"
        )
    return float(F.evaluate(M, p, float(r), x, float(t)))


# ---------------------------------------------------------------------------
# randomized validators


@dataclass
class ValidationReport:
    """Outcome of a randomized structure-condition search."""

    name: str
    passed: bool
    samples: int
    worst_lower_margin: float
    worst_upper_margin: float
    witness: dict | None = None

    def __bool__(self):
        return self.passed


def _random_sym(rng, d, scale=3.0):
    a = rng.uniform(-scale, scale, size=(d, d))
    return 0.5 * (a + a.T)


def _random_psd(rng, d):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    diag = rng.uniform(0.0, 2.0, size=d)
    diag = np.where(diag == 0.0, 2.0, diag)
    return _symmetrize(q.T @ np.diag(diag) @ q)


def _matrix_norm(N: np.ndarray, norm: str) -> float:
    w = np.linalg.eigvalsh(N)
    if norm == "trace":
        return float(np.abs(w).sum())
    if norm == "spectral":
        return float(np.abs(w).max())
    raise ValueError(f"unknown norm {norm!r}")


def _sample_point(rng, d, box, horizon):
    box = box or [(0.0, 1.0)] * d
    x = np.array([rng.uniform(a, b) for a, b in box])
    return x, float(rng.uniform(0.0, horizon))


def check_uniform_ellipticity(F: EllipticOperator, sample_count: int = 1000, seed: int = 0,
                              norm: str = "trace", rel_tol: float = 1e-10,
                              box=None, horizon: float = 1.0) -> ValidationReport:
    """Search for violations of ``-Lam|N| <= F(M+N) - F(M) <= -lam|N|``.

    ``N`` is positive definite, so the trace norm equals ``Tr N``; this is
    the normalization under which the Pucci operators satisfy the bound
    with their own constants in every dimension. Margins are reported as
    ``diff + Lam|N|`` (lower) and ``-lam|N| - diff`` (upper); negative
    means violated.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    d = F.dim
    worst_lo = worst_hi = math.inf
    witness = None
    for _ in range(sample_count):
        M = _random_sym(rng, d)
        N = _random_psd(rng, d)
        p = rng.uniform(-3, 3, size=d)
        r = float(rng.uniform(-3, 3))
        x, t = _sample_point(rng, d, box, horizon)
        diff = F.evaluate(M + N, p, r, x, t) - F.evaluate(M, p, r, x, t)
        n = _matrix_norm(N, norm)
        lo = diff + F.Lam * n
        hi = -F.lam * n - diff
        tol = rel_tol * (1.0 + abs(diff) + F.Lam * n)
        if (lo < -tol or hi < -tol) and witness is None:
            witness = dict(M=M, N=N, p=p, r=r, x=x, t=t, diff=diff, norm=n)
        worst_lo = min(worst_lo, lo)
        worst_hi = min(worst_hi, hi)
    return ValidationReport("uniform_ellipticity", witness is None, sample_count,
                            worst_lo, worst_hi, witness)


def check_structure_condition(F: EllipticOperator, R: float = 1.0, sample_count: int = 1000,
                              seed: int = 0, rel_tol: float = 1e-10, box=None,
                              horizon: float = 1.0) -> ValidationReport:
    """Search for violations of the two-sided Pucci/gamma/omega bound.

    Samples ``(M, P, r)`` and ``(N, Q, s)`` with ``|r|, |s| <= R`` at a
    shared ``(x, t)`` and checks::

        P-(M-N) - gamma|P-Q| - omega((s-r)+) <= F(M,P,r) - F(N,Q,s)
                                            <= P+(M-N) + gamma|P-Q| + omega((r-s)+)

    One in eight samples reuses the first triple exactly, so the identical
    pair case is always exercised.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    rng = np.random.default_rng(seed)
    d = F.dim
    worst_lo = worst_hi = math.inf
    witness = None
    for k in range(sample_count):
        M = _random_sym(rng, d)
        P = rng.uniform(-3, 3, size=d)
        r = float(rng.uniform(-R, R))
        if k % 8 == 0:
            N, Q, s = M.copy(), P.copy(), r
        else:
            N = _random_sym(rng, d)
            Q = rng.uniform(-3, 3, size=d)
            s = float(rng.uniform(-R, R))
        x, t = _sample_point(rng, d, box, horizon)
        diff = F.evaluate(M, P, r, x, t) - F.evaluate(N, Q, s, x, t)
        w = np.linalg.eigvalsh(_symmetrize(M - N))
        grad = F.gamma * float(np.linalg.norm(P - Q))
        lower = float(pucci_values(w, F.lam, F.Lam, -1)) - grad - F.omega(R, max(s - r, 0.0))
        upper = float(pucci_values(w, F.lam, F.Lam, 1)) + grad + F.omega(R, max(r - s, 0.0))
        lo, hi = diff - lower, upper - diff
        tol = rel_tol * (1.0 + abs(lower) + abs(upper))
        if (lo < -tol or hi < -tol) and witness is None:
            witness = dict(M=M, P=P, r=r, N=N, Q=Q, s=s, x=x, t=t, diff=diff,
                           lower=lower, upper=upper)
        worst_lo = min(worst_lo, lo)
        worst_hi = min(worst_hi, hi)
    return ValidationReport("structure_condition", witness is None, sample_count,
                            worst_lo, worst_hi, witness)


# ---------------------------------------------------------------------------
# catalog


def _make_linear(dim=1, A=None, b=None, c=0.0, forcing=None, **_):
    A = np.eye(dim) if A is None else A
    return LinearOperator(A, b=b, c=c, forcing=forcing)


def _make_pucci(sign):
    def make(dim=1, lam=1.0, Lam=1.0, gamma=0.0, c=0.0, forcing=None, **_):
        return PucciOperator(lam, Lam, sign=sign, gamma=gamma, c=c, forcing=forcing, dim=dim)
    return make


def _make_bellman(dim=1, controls=(), combiner="sup", lam=None, Lam=None, **_):
    ctrls = [c if isinstance(c, Control) else Control.make(**c) for c in controls]
    return BellmanOperator(ctrls, combiner=combiner, lam=lam, Lam=Lam)


OPERATOR_CATALOG: dict[str, Callable[..., EllipticOperator]] = {
    "linear": _make_linear,
    "pucci_plus": _make_pucci(1),
    "pucci_minus": _make_pucci(-1),
    "bellman": _make_bellman,
}


def register_operator(name: str, factory: Callable[..., EllipticOperator]) -> None:
    """Make ``factory`` available to :func:`make_operator` (and configs) as ``name``."""
    if name in OPERATOR_CATALOG:
        raise ValueError(f"operator {name!r} already registered")
    OPERATOR_CATALOG[name] = factory


def make_operator(name: str, **coefficients) -> EllipticOperator:
    try:
        factory = OPERATOR_CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown operator {name!r}; known: {sorted(OPERATOR_CATALOG)}") from None
    return factory(**coefficients)
