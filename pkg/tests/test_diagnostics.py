import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rothe.diagnostics import (
    CheckResult, DiagnosticsReport, NodalFunction, comparison_principle, convolution_suite,
    first_step_bounds, first_step_ladder, gronwall_bound, gronwall_recursion,
    gronwall_self_test, increment_report, inf_convolution, lipschitz_in_time,
    lipschitz_ladder, manufactured_problem, method_agreement, pucci_sandwich_check,
    random_start_agreement, ratio_spread, residual_probe, run_diagnostics,
    semiconvexity_check, sup_convolution, viscosity_touch_test,
)
from rothe.diagnostics.touching import _residual
from rothe.driver import refinement_ladder, run_rothe
from rothe.grid import Grid, GridFunction
from rothe.operators import Forcing, LinearOperator, PucciOperator, check_uniform_ellipticity


@pytest.fixture(scope="module")
def p1_ladder():
    p = manufactured_problem("P1_linear_1d")
    return refinement_ladder(p.operator, p.grid, p.h_list, p.horizon)


@pytest.fixture(scope="module")
def zero_seq():
    p = manufactured_problem("zero")
    return run_rothe(p.operator, p.grid, 0.1, 1.0)


# ---------------------------------------------------------------- report objects

def test_check_result_and_report():
    ok = CheckResult("a", 1.0, 2.0, 1.0)
    near = CheckResult("b", 0.0, 0.0, -1e-12, 1e-11)
    bad = CheckResult("c", 3.0, 2.0, -1.0)
    nan = CheckResult("d", math.nan, 0.0, math.nan)
    assert ok.passed and near.passed and not bad.passed and not nan.passed
    assert str(ok).startswith("[PASS] a") and str(bad).startswith("[FAIL] c")
    rep = DiagnosticsReport([ok, near])
    assert rep.passed and rep["b"] is near and len(rep) == 2
    rep.add(bad)
    assert not rep.passed and rep.summary().endswith("2/3 checks passed")
    with pytest.raises(KeyError):
        rep["zz"]


def test_ratio_spread():
    assert ratio_spread([0.0, 0.0]) == 1.0
    assert ratio_spread([0.0, 1.0]) == math.inf
    assert ratio_spread([1.0, 2.0, 4.0]) == 4.0


# ---------------------------------------------------------------- first step, increments

def test_zero_forcing_bounds(zero_seq):
    assert first_step_bounds(zero_seq).details["z1_norm"] == 0.0
    assert increment_report(zero_seq).measured == 0.0
    assert lipschitz_in_time(zero_seq).measured == 0.0


def test_single_node_increments_closed_form():
    p = manufactured_problem("single_node")
    h = 0.05
    seq = run_rothe(p.operator, p.grid, h, p.horizon)
    z = [0.0]
    for _ in range(seq.N):
        z.append((z[-1] / h - 1.0) / (8.0 + 1.0 / h))
    w = np.abs(np.diff(z))
    assert np.allclose(seq.increment_norms, w, atol=seq.N * seq.tolerance, rtol=0)
    rep = increment_report(seq)
    assert rep.passed and rep.details["sigma2"] == 0.0
    assert lipschitz_in_time(seq).measured == pytest.approx(w.max() / h, rel=1e-8)


def test_p1_ladder_bounds(p1_ladder):
    assert first_step_ladder(p1_ladder).passed
    assert lipschitz_ladder(p1_ladder).passed
    for seq in p1_ladder.levels:
        assert increment_report(seq).passed
    # time derivative of t sin(pi x) is sin(pi x): L(h) -> 1
    L = lipschitz_in_time(p1_ladder.finest).measured
    assert L == pytest.approx(1.0, abs=0.02)


def test_steady_operator_increments_do_not_grow():
    p = manufactured_problem("P2_pucci_1d_steady", nodes=31)
    seq = run_rothe(p.operator, p.grid, 0.05, 1.0)
    w = np.array(seq.increment_norms)
    assert np.all(np.diff(w) <= 2 * seq.tolerance)
    assert increment_report(seq).passed


# ---------------------------------------------------------------- Gronwall

def test_gronwall_examples():
    v, d = Fraction(3, 7), Fraction(2, 5)
    n = 13
    assert gronwall_bound(v, [Fraction(1)] * n, [d] * n) == v + n * d
    assert gronwall_bound(Fraction(5), [], []) == Fraction(5)
    assert gronwall_recursion(Fraction(5), [], []) == Fraction(5)


def test_gronwall_rejects_bad_input():
    with pytest.raises(ValueError):
        gronwall_bound(-1.0, [1.0], [1.0])
    with pytest.raises(ValueError):
        gronwall_bound(1.0, [1.0, -2.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        gronwall_recursion(1.0, [1.0], [])


fractions = st.fractions(min_value=0, max_value=50, max_denominator=997)


@settings(max_examples=300, deadline=None)
@given(v0=fractions, pairs=st.lists(st.tuples(fractions, fractions), max_size=30))
def test_gronwall_closed_form_equals_recursion(v0, pairs):
    B = [b for b, _ in pairs]
    D = [d for _, d in pairs]
    assert gronwall_bound(v0, B, D) == gronwall_recursion(v0, B, D)


def test_gronwall_self_test_is_clean():
    assert gronwall_self_test(instances=200, seed=5).measured == 0


# ---------------------------------------------------------------- sandwich

def test_sandwich_collapses_for_linear_operator(p1_ladder):
    seq = p1_ladder.levels[1]
    for n in (0, 7, seq.N - 1):
        c = pucci_sandwich_check(seq.operator, seq.iterate(n), seq.iterate(n + 1), seq.h,
                                 (n + 1) * seq.h)
        assert c.passed
        assert abs(c.details["min_lower_margin"]) <= 100 * seq.tolerance
        assert abs(c.details["min_upper_margin"]) <= 100 * seq.tolerance


def test_sandwich_pucci_upper_tight_lower_strict():
    p = manufactured_problem("P2_pucci_1d", nodes=31)
    seq = run_rothe(p.operator, p.grid, 0.05, 0.5)
    n = seq.N - 1
    c = pucci_sandwich_check(seq.operator, seq.iterate(n), seq.iterate(n + 1), seq.h, seq.T)
    assert c.passed
    assert c.details["min_upper_margin"] <= c.tolerance
    assert c.details["min_lower_margin"] > 10 * c.tolerance


def test_sandwich_zero_sequence(zero_seq):
    c = pucci_sandwich_check(zero_seq.operator, zero_seq.iterate(2), zero_seq.iterate(3),
                             zero_seq.h, 0.3)
    assert c.passed and c.measured == 0.0


def test_sandwich_deficit_shrinks_with_dx():
    """Deficits of the pointwise reading shrink at least linearly in dx."""
    deficits = []
    for nodes in (31, 63):
        p = manufactured_problem("P2_pucci_1d", nodes=nodes)
        seq = run_rothe(p.operator, p.grid, 0.1, 0.5)
        c = pucci_sandwich_check(seq.operator, seq.iterate(4), seq.iterate(5), seq.h, 0.5)
        assert c.passed
        deficits.append(max(0.0, -c.measured))
    assert deficits[0] == 0.0 or deficits[0] / max(deficits[1], 1e-300) >= 1.5


# ---------------------------------------------------------------- convolutions

def test_sup_convolution_spike():
    g = Grid.interval(1)
    u = GridFunction(g, [1.0])
    ue = sup_convolution(u, 1.0)
    assert list(ue.values) == [0.875, 1.0, 0.875]
    assert semiconvexity_check(ue, 1.0, u=u).passed
    half = sup_convolution(u, 0.5)
    assert list(half.values) == [0.75, 1.0, 0.75]
    chk = semiconvexity_check(half, 0.5, u=u, coarser=ue)
    assert chk.passed and chk.bound == -2.0


def test_convolution_of_zero_and_constant():
    g = Grid.interval(15)
    z = sup_convolution(GridFunction.zeros(g), 0.3)
    assert np.all(z.values == 0.0)
    assert semiconvexity_check(z, 0.3).measured == 0.0
    c = sup_convolution(GridFunction(g, np.full(g.shape, 2.0)), 1e-3)
    assert c[(8,)] == 2.0
    assert isinstance(c, NodalFunction) and c.interior().grid == g


def test_inf_convolution_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        inf_convolution(GridFunction.zeros(Grid.interval(3)), 0.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.sampled_from([1, 2]),
       eps=st.sampled_from([1.0, 0.2, 0.03]))
def test_convolution_properties(seed, dim, eps):
    g = Grid.interval(12) if dim == 1 else Grid.rectangle(6, 5)
    rng = np.random.default_rng(seed)
    u = GridFunction(g, rng.uniform(-1, 1, g.shape))
    sup = sup_convolution(u, eps)
    assert np.array_equal(inf_convolution(u, eps).values, -sup_convolution(-u, eps).values)
    assert np.all(sup.values >= u.full())
    smaller = sup_convolution(u, eps / 2)
    assert np.all(smaller.values <= sup.values)
    assert semiconvexity_check(smaller, eps / 2, u=u, coarser=sup).passed


def test_sup_convolution_converges_on_lipschitz_samples():
    g = Grid.interval(63)
    u = GridFunction.from_function(g, lambda p: np.abs(p[:, 0] - 0.3) - 0.7 * p[:, 0] ** 2)
    dists = [np.max(sup_convolution(u, e).values - u.full()) for e in (0.1, 0.01, 0.001)]
    assert dists[0] > dists[1] > dists[2] >= 0.0


def test_convolution_suite_counts_nothing():
    rep = convolution_suite(3, Grid.rectangle(5, 5), seed=1)
    assert rep.passed and len(rep) == 4


# ---------------------------------------------------------------- touching test

def test_touch_residual_hand_example():
    """phi = delta|x - x0|^2 + delta (t - t0) under -u_xx: residual delta - 2 delta."""
    F = LinearOperator([[1.0]])
    delta = 0.2
    Q = np.array([[2 * delta]])
    Y = np.linspace(-0.1, 0.1, 5)[:, None]
    X = 0.5 + Y
    phi = np.zeros((3, 5))
    E = _residual(F, Q, np.zeros(1), Y, X, phi, delta, (1, 2, 3), 0.1)
    assert np.allclose(E, delta - 2 * delta)


def test_touching_zero_candidate_passes(zero_seq):
    c = viscosity_touch_test(zero_seq, trial_count=50, seed=3)
    assert c.passed and c.measured == 1.0
    assert c.details["qualifying"] == 50


def test_touching_p1(p1_ladder):
    good = viscosity_touch_test(p1_ladder, trial_count=100, seed=0)
    assert good.passed
    bad = viscosity_touch_test(p1_ladder, trial_count=200, seed=0, candidate_scale=2.0)
    assert bad.details["failed"] >= 1


def test_touching_is_reproducible(p1_ladder):
    a = viscosity_touch_test(p1_ladder, trial_count=30, seed=11)
    b = viscosity_touch_test(p1_ladder, trial_count=30, seed=11)
    assert a.table == b.table


def test_touching_rejects_small_windows():
    p = manufactured_problem("single_node")
    seq = run_rothe(p.operator, p.grid, 0.05, 0.2)
    with pytest.raises(ValueError):
        viscosity_touch_test(seq)


# ---------------------------------------------------------------- robustness

def test_random_starts_and_comparison():
    p = manufactured_problem("P2_pucci_1d", nodes=15)
    seq = run_rothe(p.operator, p.grid, 0.1, 0.3)
    assert random_start_agreement(seq, starts=5, seed=1).passed
    assert comparison_principle(p.operator, p.grid, 0.1, 0.1, pairs=10, seed=2).passed


def test_method_agreement_on_bellman():
    p = manufactured_problem("P3_bellman_2d")
    seq = run_rothe(p.operator, p.grid, 0.1, 0.3)
    assert method_agreement(seq).passed
    with pytest.raises(TypeError):
        method_agreement(run_rothe(LinearOperator([[1.0]]), Grid.interval(5), 0.1, 0.2))


# ---------------------------------------------------------------- catalog

def test_p1_residual_probe_and_initial_value():
    p = manufactured_problem("P1_linear_1d")
    assert residual_probe(p, np.array([[0.5]]), [1.0]) <= 1e-6
    pts = np.linspace(0.05, 0.95, 7)[:, None]
    assert residual_probe(p, pts, [0.2, 0.7]) <= 1e-6
    assert np.all(p.exact_on_grid(p.grid, 0.0) == 0.0)


def test_catalog():
    p2 = manufactured_problem("P2_pucci_1d")
    assert p2.exact_solution is None
    assert check_uniform_ellipticity(p2.operator, 300, seed=0).passed
    assert manufactured_problem("P3_bellman_2d").grid.dim == 2
    with pytest.raises(KeyError):
        manufactured_problem("P9")
    with pytest.raises(TypeError):
        manufactured_problem("P1_linear_1d", nodes=7)
    with pytest.raises(ValueError):
        manufactured_problem("P2_pucci_1d").exact_on_grid(p2.grid, 0.5)


def test_run_diagnostics_names():
    p = manufactured_problem("P2_pucci_1d", nodes=15)
    lad = refinement_ladder(p.operator, p.grid, [0.1, 0.05], 0.5)
    rep = run_diagnostics(lad, ["first_step", "increments", "lipschitz", "gronwall"])
    assert rep.passed
    with pytest.raises(ValueError):
        run_diagnostics(lad, ["astrology"])


def test_forcing_time_modulus_is_validated():
    f = Forcing.from_expression("-(1+t)*8*sin(pi*x)", 1)
    assert PucciOperator(1.0, 2.0, forcing=f).sigma2(0.01) == pytest.approx(0.08, rel=1e-3)
