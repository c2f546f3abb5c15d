"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even without ``-s``.
"""

import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from rothe.cli import main
from rothe.diagnostics import (
    comparison_principle, convolution_suite, first_step_ladder, gronwall_bound,
    gronwall_recursion, gronwall_self_test, increment_report, lipschitz_ladder,
    manufactured_problem, method_agreement, pucci_sandwich_report, random_start_agreement,
    sup_convolution, viscosity_touch_test,
)
from rothe.driver import refinement_ladder, run_rothe
from rothe.grid import Grid, GridFunction

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
LADDER = (0.1, 0.05, 0.025, 0.0125)


@pytest.fixture
def verdict(capsys):
    def report(k, ok, text):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {text}")
        assert ok, f"criterion {k}: {text}"
    return report


@pytest.fixture(scope="module")
def p1_ladder():
    p = manufactured_problem("P1_linear_1d")
    return refinement_ladder(p.operator, p.grid, LADDER, 1.0)


@pytest.fixture(scope="module")
def p2_ladder():
    p = manufactured_problem("P2_pucci_1d")
    return refinement_ladder(p.operator, p.grid, LADDER, 1.0)


@pytest.fixture(scope="module")
def p3_ladder():
    p = manufactured_problem("P3_bellman_2d")
    return refinement_ladder(p.operator, p.grid, LADDER, 1.0, max_workers=4)


def test_criterion_01_manufactured_convergence(verdict):
    """Observed temporal order 1 +- 0.3 on levels where spatial error is subdominant."""
    start = time.perf_counter()
    p = manufactured_problem("P1_linear_1d")
    times = (0.25, 0.5, 1.0)
    lad = refinement_ladder(p.operator, p.grid, LADDER, 1.0)
    control = refinement_ladder(p.operator, Grid.interval(255), LADDER, 1.0)
    err = {(r[0], r[1]): r[2] for r in lad.error_table(p.exact_solution, times)}
    err_c = {(r[0], r[1]): r[2] for r in control.error_table(p.exact_solution, times)}
    elapsed = time.perf_counter() - start
    orders, raw = [], []
    for t in times:
        for a, b in zip(LADDER, LADDER[1:]):
            raw.append(math.log2(err[a, t] / err[b, t]))
            # the control run removes most spatial error; the rest of the
            # 63-node error at this h is the spatial share
            share = [abs(err[h, t] - err_c[h, t]) / err[h, t] for h in (a, b)]
            if max(share) < 0.5:
                orders.append(raw[-1])
    ok = bool(orders) and all(abs(q - 1.0) <= 0.3 for q in orders) and elapsed < 60
    spatial = max(abs(err[h, t] - err_c[h, t]) / err[h, t] for h in LADDER for t in times)
    verdict(1, ok,
            f"qualifying orders {np.round(orders, 3).tolist()}; raw orders "
            f"{np.round(raw, 3).tolist()}; max spatial share {spatial:.3f}; "
            f"error at t=1: 63 nodes {err[LADDER[-1], 1.0]:.3e}, "
            f"255 nodes {err_c[LADDER[-1], 1.0]:.3e}; {elapsed:.1f}s")


def test_criterion_02_first_step(verdict, p1_ladder, p2_ladder):
    s1 = first_step_ladder(p1_ladder)
    s2 = first_step_ladder(p2_ladder)
    p = manufactured_problem("single_node")
    dev = 0.0
    for h in LADDER:
        seq = run_rothe(p.operator, p.grid, h, p.horizon)
        dev = max(dev, abs(seq.iterate(1).flat[0] - (-h / (8 * h + 1))))
    ok = s1.measured <= 4 and s2.measured <= 4 and dev <= 1e-10
    verdict(2, ok, f"spread P1 {s1.measured:.3f}, P2 {s2.measured:.3f} (<= 4); "
                   f"single node max |z1 + h/(8h+1)| = {dev:.2e} (<= 1e-10)")


def test_criterion_03_increments(verdict, p1_ladder):
    p = manufactured_problem("P2_pucci_1d_steady")
    steady = refinement_ladder(p.operator, p.grid, LADDER, 1.0)
    worst_growth = -math.inf
    mono = True
    for seq in steady.levels:
        w = np.array(seq.increment_norms)
        growth = np.diff(w)
        worst_growth = max(worst_growth, float(growth.max()))
        mono &= bool(np.all(growth <= 2 * seq.tolerance))
    p1 = [increment_report(s) for s in p1_ladder.levels]
    p1_ok = all(c.passed for c in p1)
    worst_p1 = min(c.margin for c in p1)
    verdict(3, mono and p1_ok,
            f"steady P2 largest increment growth {worst_growth:.2e} (<= 2 tol); "
            f"P1 smallest margin to w_(n-1) + h sigma2(h) {worst_p1:.2e} (>= -2 tol)")


def test_criterion_04_lipschitz(verdict, p1_ladder, p2_ladder, p3_ladder):
    checks = {name: lipschitz_ladder(lad) for name, lad in
              (("P1", p1_ladder), ("P2", p2_ladder), ("P3", p3_ladder))}
    ok = all(c.measured <= 4 for c in checks.values())
    verdict(4, ok, "L(h) spread " + ", ".join(f"{k} {c.measured:.3f}" for k, c in checks.items())
            + " (<= 4)")


def test_criterion_05_pucci_sandwich(verdict):
    h = LADDER[-1]
    rng = np.random.default_rng(0)
    deficits = {}
    all_pass = True
    steps = None
    for nodes in (31, 63):
        p = manufactured_problem("P2_pucci_1d", nodes=nodes)
        seq = run_rothe(p.operator, p.grid, h, 1.0)
        if steps is None:
            steps = sorted(int(n) for n in rng.choice(seq.N, size=5, replace=False))
        rep = pucci_sandwich_report(seq, steps)
        all_pass &= rep.passed
        deficits[nodes] = max(max(0.0, -c.measured) for c in rep)
    ratio = deficits[31] / deficits[63] if deficits[63] > 0 else math.inf
    ok = all_pass and (deficits[31] == 0.0 or ratio >= 1.5)
    verdict(5, ok, f"steps {steps}; worst deficit dx=1/32 {deficits[31]:.3e}, "
                   f"dx=1/64 {deficits[63]:.3e}, ratio {ratio:.2f} (>= 1.5); "
                   f"all nodes within slack: {all_pass}")


def test_criterion_06_gronwall(verdict):
    chk = gronwall_self_test(instances=1000, seed=0, max_len=50)
    rng = np.random.default_rng(1)
    special = 0
    for _ in range(200):
        n = int(rng.integers(0, 51))
        v = Fraction(int(rng.integers(0, 1000)), int(rng.integers(1, 1000)))
        d = Fraction(int(rng.integers(0, 1000)), int(rng.integers(1, 1000)))
        B, D = [Fraction(1)] * n, [d] * n
        special += gronwall_bound(v, B, D) != v + n * d
        special += gronwall_recursion(v, B, D) != v + n * d
    ok = chk.measured == 0 and special == 0
    verdict(6, ok, f"{chk.measured} mismatches in 1000 random instances; "
                   f"{special} mismatches of the B=1 form v0 + n d")


def test_criterion_07_convolution(verdict):
    rep1 = convolution_suite(100, Grid.interval(31), seed=0)
    rep2 = convolution_suite(100, Grid.rectangle(9, 9), seed=1)
    spike = sup_convolution(GridFunction(Grid.interval(1), [1.0]), 1.0)
    counts = {c.name: int(c.measured) + int(rep2[c.name].measured) for c in rep1}
    ok = all(v == 0 for v in counts.values()) and spike[(0,)] == 0.875
    verdict(7, ok, f"violations {counts}; spike value at 0 = {spike[(0,)]!r} (7/8)")


def test_criterion_08_touching(verdict, p1_ladder):
    start = time.perf_counter()
    good = viscosity_touch_test(p1_ladder, trial_count=200, seed=0)
    bad = viscosity_touch_test(p1_ladder, trial_count=200, seed=0, candidate_scale=2.0)
    elapsed = time.perf_counter() - start
    ok = good.measured >= 0.95 and bad.details["failed"] >= 1 and elapsed < 120
    verdict(8, ok, f"U passes {good.details['passed']}/{good.details['qualifying']} "
                   f"({good.details['interior_touches']} interior touches); "
                   f"2U fails {bad.details['failed']}/{bad.details['qualifying']}; "
                   f"{elapsed:.1f}s")


def test_criterion_09_robustness(verdict, p2_ladder, p3_ladder):
    results = {}
    for name, lad in (("P2", p2_ladder), ("P3", p3_ladder)):
        seq = lad.levels[0]
        results[f"{name} random starts"] = random_start_agreement(seq, starts=20, seed=0)
        results[f"{name} comparison"] = comparison_principle(
            seq.operator, seq.grid, seq.h, seq.h, pairs=50, seed=0, cfg=seq.config)
    results["P3 Newton vs policy"] = method_agreement(p3_ladder.levels[0])
    ok = all(c.passed for c in results.values())
    verdict(9, ok, "; ".join(f"{k} {c.measured:.1e} (bound {c.bound:.1e}, tol {c.tolerance:.1e})"
                             for k, c in results.items()))


def test_criterion_10_reproducibility(verdict, tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["verify", "--config", str(CONFIGS / "p1.ini"), "--out", str(o)])
             for o in outs]
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    same = [n for n in names if (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()]
    ok = codes == [0, 0] and names and len(same) == len(names)
    verdict(10, ok, f"{len(same)}/{len(names)} CSV files byte-identical; exit codes {codes}")
