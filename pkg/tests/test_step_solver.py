import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rothe.grid import Grid, GridFunction, assemble_residual
from rothe.operators import (
    BellmanOperator, Control, CustomOperator, Forcing, LinearOperator, PucciOperator,
)
from rothe.step_solver import (
    NonConvergence, StepConfig, newton, policy_iteration, pseudo_time_relaxation, solve_step,
)

H = 0.1
SINGLE = -H / (8 * H + 1)  # closed form of the one-node step, = -1/18


def _single_node():
    return Grid.interval(1), LinearOperator([[1.0]], forcing=Forcing.constant(1.0))


def _bellman_2d():
    return BellmanOperator([
        Control.make([[1.0, 0.25], [0.25, 0.8]], [0.5, 0.0], 0.5,
                     Forcing.from_expression("-4*sin(pi*x)*sin(pi*y)", 2)),
        Control.make([[0.6, -0.2], [-0.2, 1.0]], [0.0, -0.5], 0.0,
                     Forcing.from_expression("-16*x*(1-x)*y*(1-y)", 2)),
    ])


def test_config_validation():
    for kw in (dict(tolerance=0), dict(max_newton_iters=0), dict(damping=1.5),
               dict(damping=0.0), dict(fd_epsilon=-1.0)):
        with pytest.raises(ValueError):
            StepConfig(**kw)
    assert StepConfig().effective_tolerance(0.1) == pytest.approx(1.1e-9)
    assert StepConfig(scale_tolerance=False).effective_tolerance(0.1) == 1e-10


def test_zero_problem_needs_no_iterations():
    g = Grid.rectangle(5, 5)
    z, rep = solve_step(PucciOperator(1.0, 2.0, dim=2), GridFunction.zeros(g), H, H)
    assert z.norm_inf() == 0.0 and rep.iterations == 0 and rep.converged


@pytest.mark.parametrize("method", ["auto", "newton", "pseudo_time", "policy_iteration"])
def test_single_node_closed_form(method):
    g, F = _single_node()
    if method == "policy_iteration":
        F = BellmanOperator([Control.make([[1.0]], forcing=Forcing.constant(1.0))])
    z, rep = solve_step(F, GridFunction.zeros(g), H, H, method=method)
    assert rep.converged
    assert z.flat[0] == pytest.approx(SINGLE, abs=rep.tolerance)
    assert SINGLE == pytest.approx(-1 / 18, abs=1e-15)


def test_pseudo_time_contracts_geometrically():
    g, F = _single_node()
    z, rep = pseudo_time_relaxation(F, GridFunction.zeros(g), H, H)
    assert z.flat[0] == pytest.approx(SINGLE, abs=1e-9)
    # tau = 1/(1/h + 8) is exact for the scalar problem: one step suffices
    assert rep.iterations == 1


def test_pseudo_time_returns_immediately_on_solution():
    g, F = _single_node()
    z0 = GridFunction(g, [SINGLE])
    z, rep = pseudo_time_relaxation(F, GridFunction.zeros(g), H, H, initial=z0)
    assert rep.iterations == 0 and z == z0


def test_pseudo_time_detects_divergence():
    g, F = _single_node()
    tau = 10.0 / (1.0 / H + 8.0)
    with pytest.raises(NonConvergence) as info:
        pseudo_time_relaxation(F, GridFunction.zeros(g), H, H, tau=tau)
    assert "diverged" in info.value.report.notes


def test_pseudo_time_on_pucci_matches_newton():
    g = Grid.interval(15)
    F = PucciOperator(1.0, 2.0, gamma=0.5, forcing=Forcing.from_expression("-8*sin(pi*x)", 1))
    zp = GridFunction.from_function(g, lambda p: np.sin(np.pi * p[:, 0]) * 0.1)
    za, _ = newton(F, zp, H, H)
    zb, rep = pseudo_time_relaxation(F, zp, H, H)
    assert (za - zb).norm_inf() <= 10 * rep.tolerance


def test_newton_cap_falls_back_to_pseudo_time():
    g = Grid.interval(15)
    F = PucciOperator(1.0, 2.0, gamma=0.5, forcing=Forcing.from_expression("-8*sin(pi*x)", 1))
    cfg = StepConfig(max_newton_iters=1)
    z, rep = solve_step(F, GridFunction.zeros(g), H, H, cfg)
    assert rep.converged and rep.method_used == "pseudo_time" and rep.switched_from == "newton"
    r = assemble_residual(F, z, GridFunction.zeros(g), H, H)
    assert r.norm_inf() <= rep.tolerance


def test_nonconvergence_carries_best_iterate():
    g = Grid.interval(15)
    F = PucciOperator(1.0, 2.0, gamma=0.5, forcing=Forcing.from_expression("-8*sin(pi*x)", 1))
    cfg = StepConfig(max_newton_iters=1, max_pseudo_time_iters=1, tolerance=1e-300)
    with pytest.raises(NonConvergence) as info:
        solve_step(F, GridFunction.zeros(g), H, H, cfg)
    exc = info.value
    assert exc.best.grid == g and not exc.report.converged
    assert exc.report.switched_from == "newton"


def test_policy_iteration_single_control_is_one_solve():
    g = Grid.interval(9)
    F = BellmanOperator([Control.make([[1.0]], [0.3], 0.2, Forcing.constant(-1.0))])
    z, rep = policy_iteration(F, GridFunction.zeros(g), H, H)
    assert rep.iterations == 1 and rep.converged


def test_policy_iteration_uniform_switch_takes_two_iterations():
    g = Grid.interval(9)
    F = BellmanOperator([Control.make([[1.0]]), Control.make([[2.0]])])
    zp = GridFunction.from_function(g, lambda p: np.sin(np.pi * p[:, 0]))
    # a convex start selects the weak control everywhere; the concave
    # solution then switches every node to the strong one
    z, rep = policy_iteration(F, zp, H, H, initial=-zp)
    assert rep.iterations == 2 and rep.converged


def test_policy_iteration_rejects_non_bellman():
    g, F = _single_node()
    with pytest.raises(TypeError):
        policy_iteration(F, GridFunction.zeros(g), H, H)


def test_newton_and_policy_iteration_agree():
    g = Grid.rectangle(7, 7)
    F = _bellman_2d()
    zp = GridFunction.from_function(g, lambda p: np.sin(np.pi * p[:, 0]) * p[:, 1])
    za, ra = solve_step(F, zp, H, 0.3, method="newton")
    zb, rb = solve_step(F, zp, H, 0.3, method="policy_iteration")
    assert (za - zb).norm_inf() <= 10 * ra.tolerance


def test_pointwise_discretization_matches_specialized():
    g = Grid.interval(9)
    f = Forcing.from_expression("-(1+t)*sin(pi*x)", 1)
    F = LinearOperator([[1.0]], forcing=f)
    G = CustomOperator(lambda M, p, r, x, t: -M[0, 0] + f(np.atleast_2d(x), t)[0],
                       dim=1, lam=1.0, Lam=1.0)
    zp = GridFunction.zeros(g)
    za, _ = solve_step(F, zp, H, H)
    zb, rep = solve_step(G, zp, H, H)
    assert (za - zb).norm_inf() <= 10 * rep.tolerance


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), h=st.sampled_from([0.5, 0.1, 0.01]),
       which=st.sampled_from(["pucci", "pucci_minus", "bellman"]))
def test_solution_is_a_residual_certificate(seed, h, which):
    """Whatever the start, the returned iterate zeroes the step residual."""
    if which == "bellman":
        g, F = Grid.rectangle(5, 5), _bellman_2d()
    else:
        sign = 1 if which == "pucci" else -1
        g = Grid.interval(11)
        F = PucciOperator(1.0, 2.0, sign=sign, gamma=0.5, c=0.2,
                          forcing=Forcing.from_expression("cos(3*x) - t", 1))
    rng = np.random.default_rng(seed)
    zp = GridFunction(g, rng.normal(size=g.shape))
    init = GridFunction(g, rng.normal(size=g.shape) * 5)
    z, rep = solve_step(F, zp, h, 2 * h, initial=init)
    r = assemble_residual(F, z, zp, h, 2 * h)
    assert rep.converged and r.norm_inf() <= rep.tolerance


def test_comparison_of_steps():
    g = Grid.interval(11)
    F = PucciOperator(1.0, 2.0, gamma=0.5, forcing=Forcing.from_expression("sin(5*x)", 1))
    rng = np.random.default_rng(4)
    a = rng.normal(size=g.shape)
    b = a + np.abs(rng.normal(size=g.shape))
    za, rep = solve_step(F, GridFunction(g, a), H, H)
    zb, _ = solve_step(F, GridFunction(g, b), H, H)
    assert np.max(za.flat - zb.flat) <= 10 * rep.tolerance


def test_unknown_method_and_bad_h():
    g, F = _single_node()
    with pytest.raises(ValueError):
        solve_step(F, GridFunction.zeros(g), H, H, method="bisection")
    with pytest.raises(ValueError):
        solve_step(F, GridFunction.zeros(g), 0.0, H)
