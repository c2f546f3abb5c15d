import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from rothe.diagnostics import manufactured_problem
from rothe.driver import (
    geometric_ladder, interpolate, refinement_ladder, run_rothe, step_count,
)
from rothe.grid import Grid, GridFunction
from rothe.operators import Forcing, LinearOperator, PucciOperator
from rothe.step_solver import NonConvergence, StepConfig


def _single_node():
    return Grid.interval(1), LinearOperator([[1.0]], forcing=Forcing.constant(1.0))


def _single_node_recursion(h, n):
    """Scalar oracle: (8 + 1/h) z_{k+1} = z_k / h - 1."""
    z = [0.0]
    for _ in range(n):
        z.append((z[-1] / h - 1.0) / (8.0 + 1.0 / h))
    return z


def test_step_count():
    assert step_count(1.0, 0.1) == 10
    assert step_count(0.3, 0.1) == 3
    assert step_count(1.0, 0.3) == 4
    assert step_count(0.05, 0.1) == 1


def test_zero_problem_stays_zero():
    g = Grid.rectangle(5, 5)
    seq = run_rothe(PucciOperator(1.0, 2.0, gamma=0.3, dim=2), g, 0.1, 0.5)
    assert seq.N == 5 and seq.complete
    assert all(seq.iterate(n).norm_inf() == 0.0 for n in range(6))
    assert seq.increment_norms == [0.0] * 5


def test_single_node_two_steps():
    g, F = _single_node()
    seq = run_rothe(F, g, 0.1, 0.2)
    z1, z2 = seq.iterate(1).flat[0], seq.iterate(2).flat[0]
    assert z1 == pytest.approx(-1 / 18, abs=seq.tolerance)
    assert z2 == pytest.approx((z1 / 0.1 - 1) / (8 + 1 / 0.1), abs=seq.tolerance)
    ref = _single_node_recursion(0.1, 2)
    assert z2 == pytest.approx(ref[2], abs=2 * seq.tolerance)


def test_interpolate_examples():
    g, F = _single_node()
    seq = run_rothe(F, g, 0.1, 0.5)
    assert interpolate(seq, 0.0).norm_inf() == 0.0
    assert interpolate(seq, 0.3) is seq.iterate(3)
    mid = interpolate(seq, 0.25).flat[0]
    assert mid == pytest.approx(0.5 * (seq.iterate(2).flat[0] + seq.iterate(3).flat[0]),
                                abs=1e-15)
    with pytest.raises(ValueError):
        interpolate(seq, 0.6)
    with pytest.raises(ValueError):
        interpolate(seq, -0.1)


def test_horizon_not_multiple_of_h():
    g, F = _single_node()
    seq = run_rothe(F, g, 0.3, 1.0)
    assert seq.N == 4
    assert interpolate(seq, 1.0).grid == g


def test_thinning_keeps_pairs_and_norms():
    g = Grid.interval(7)
    F = LinearOperator([[1.0]], forcing=Forcing.from_expression("-sin(pi*x)", 1))
    full = run_rothe(F, g, 0.05, 1.0)
    thin = run_rothe(F, g, 0.05, 1.0, thin=5)
    assert not thin.complete
    assert thin.increment_norms == full.increment_norms
    assert thin.iterate(20) == full.iterate(20)
    assert thin.iterate(5) == full.iterate(5) and thin.iterate(6) == full.iterate(6)
    with pytest.raises(KeyError):
        thin.iterate(3)


def test_time_independent_restart_matches_continuation():
    g = Grid.interval(9)
    F = PucciOperator(1.0, 2.0, gamma=0.5, forcing=Forcing.from_expression("-8*sin(pi*x)", 1))
    long = run_rothe(F, g, 0.1, 1.0)
    head = run_rothe(F, g, 0.1, 0.5)
    tail = run_rothe(F, g, 0.1, 0.5, initial=head.iterate(5))
    assert (tail.iterate(5) - long.iterate(10)).norm_inf() <= 10 * long.tolerance


def test_run_rothe_validation():
    g, F = _single_node()
    for h in (0.0, 2.0, -0.1):
        with pytest.raises(ValueError):
            run_rothe(F, g, h, 1.0)
    with pytest.raises(ValueError):
        run_rothe(F, g, 0.1, 0.0)
    with pytest.raises(ValueError):
        run_rothe(F, g, 0.1, 1.0, thin=0)


def test_nonconvergence_reports_step_and_partial():
    g = Grid.interval(15)
    F = PucciOperator(1.0, 2.0, gamma=0.5, forcing=Forcing.from_expression("-8*sin(pi*x)", 1))
    cfg = StepConfig(max_newton_iters=1, max_pseudo_time_iters=1, tolerance=1e-300)
    with pytest.raises(NonConvergence) as info:
        run_rothe(F, g, 0.1, 1.0, cfg)
    assert info.value.step == 1 and info.value.partial.N == 0


# ---------------------------------------------------------------- ladders

def test_ladder_validation():
    g, F = _single_node()
    for hs in ([], [0.1, 0.1], [0.05, 0.1], [2.0, 1.0]):
        with pytest.raises(ValueError):
            refinement_ladder(F, g, hs, 1.0)
    assert geometric_ladder(0.1, 3) == (0.1, 0.05, 0.025)


def test_zero_ladder_has_zero_cauchy_table():
    g = Grid.interval(7)
    lad = refinement_ladder(LinearOperator([[1.0]]), g, [0.1, 0.05, 0.025], 1.0)
    assert all(r[3] == 0.0 for r in lad.cauchy_table([0.5, 1.0], pairs="all"))


def test_single_node_ladder_matches_recursion():
    g, F = _single_node()
    lad = refinement_ladder(F, g, [0.1, 0.05, 0.025], 0.2)
    for seq in lad.levels:
        ref = _single_node_recursion(seq.h, seq.N)
        got = [seq.iterate(n).flat[0] for n in range(seq.N + 1)]
        assert np.allclose(got, ref, atol=seq.N * seq.tolerance, rtol=0)


def test_parallel_ladder_is_identical():
    p = manufactured_problem("P2_pucci_1d", nodes=15)
    a = refinement_ladder(p.operator, p.grid, [0.1, 0.05, 0.025], 0.5)
    b = refinement_ladder(p.operator, p.grid, [0.1, 0.05, 0.025], 0.5, max_workers=3)
    for sa, sb in zip(a.levels, b.levels):
        assert all(x == y for x, y in zip(sa.iterates, sb.iterates))


def test_p1_cauchy_differences_shrink():
    p = manufactured_problem("P1_linear_1d")
    lad = refinement_ladder(p.operator, p.grid, [0.1, 0.05, 0.025, 0.0125], 1.0)
    for t in (0.5, 1.0):
        d = [r[3] for r in lad.cauchy_table([t])]
        assert all(a / b >= 1.5 for a, b in zip(d, d[1:])), d


def test_p1_error_decreases_with_h():
    p = manufactured_problem("P1_linear_1d")
    lad = refinement_ladder(p.operator, p.grid, [0.1, 0.05, 0.025], 1.0)
    errs = [r[2] for r in lad.error_table(p.exact_solution, [0.5])]
    assert errs[0] > errs[1] > errs[2]
    rows = lad.error_table(p.exact_solution, [0.5])
    assert math.isnan(rows[0][3]) and not math.isnan(rows[1][3])


def test_first_order_in_time_on_time_nonlinear_problem():
    """Backward Euler is first order once the solution is not affine in time.

    sin(pi x) is an exact eigenvector of the discrete Laplacian on the
    uniform grid, so the Rothe iterates are a_n sin(pi x) and the oracle is
    the scalar ODE a' = -mu a + k(t), integrated independently.
    """
    n = 31
    dx = 1.0 / (n + 1)
    mu = 4.0 / dx ** 2 * math.sin(math.pi * dx / 2) ** 2
    F = LinearOperator([[1.0]], forcing=Forcing.from_expression("-10*cos(2*pi*t)*sin(pi*x)", 1))
    sol = solve_ivp(lambda t, a: -mu * a + 10 * math.cos(2 * math.pi * t), (0.0, 1.0), [0.0],
                    method="Radau", rtol=1e-12, atol=1e-14, dense_output=True)
    g = Grid.interval(n)
    shape = np.sin(np.pi * g.points[:, 0])
    hs = [0.02, 0.01, 0.005, 0.0025]
    lad = refinement_ladder(F, g, hs, 1.0)
    errs = [np.max(np.abs(seq.iterate(seq.N).flat - sol.sol(1.0)[0] * shape))
            for seq in lad.levels]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 1.0) <= 0.3), orders
