"""Command line interface: ``rothe solve | verify | convergence``.

Exit codes: 0 success, 1 a verification check failed, 2 invalid
configuration, 3 a nonlinear solve did not converge.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config, serialize_config
from .diagnostics import run_diagnostics
from .driver import RefinementLadder, refinement_ladder
from .io import (
    RunManifest, ladder_times, write_cauchy_table, write_check_table, write_checks,
    write_error_table, write_snapshots, write_telemetry, write_two_column,
)
from .plotting import plot_cauchy, plot_checks, plot_errors, plot_increments, plot_snapshots
from .step_solver import NonConvergence

log = logging.getLogger("rothe")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2, 3


def _setup(args, command: str):
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(seed=args.seed, output_dir=args.out, levels=args.levels)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out, command, serialize_config(cfg), __version__)
    return cfg, out, manifest


def _run_ladder(cfg: RunConfig) -> RefinementLadder:
    return refinement_ladder(cfg.build_operator(), cfg.grid, cfg.h_values, cfg.horizon,
                             cfg.step_config, max_workers=cfg.max_workers, thin=cfg.thin,
                             method=cfg.method)


def _nonconvergence(exc: NonConvergence, manifest: RunManifest, out: Path) -> int:
    manifest.status = "nonconvergence"
    manifest.notes.append(f"{exc} (level {exc.level}, step {exc.step}, "
                          f"residual {exc.report.final_residual_norm:.3e})")
    seq = exc.partial
    if seq is not None and seq.N >= 1:
        manifest.add(write_telemetry(out / "telemetry_partial.csv", [seq]))
        manifest.notes.append("telemetry_partial.csv holds the steps completed before failure")
    manifest.write()
    log.error("nonlinear solve failed: %s", exc)
    return EXIT_NONCONVERGENCE


def _write_solution_outputs(cfg: RunConfig, ladder: RefinementLadder, out: Path,
                            manifest: RunManifest) -> None:
    times = ladder_times(ladder, cfg.snapshot_times)
    complete = [s for s in ladder.levels if s.complete]
    if complete:
        manifest.add(write_snapshots(out / "snapshots.csv", complete, times))
        manifest.add(plot_snapshots(out / "snapshots.png", complete[-1], times))
    manifest.add(write_telemetry(out / "telemetry.csv", ladder.levels))
    manifest.add(plot_increments(out / "increments.png", ladder))
    problem = cfg.test_problem()
    if problem is not None and problem.exact_solution is not None and complete:
        sub = RefinementLadder(tuple(s.h for s in complete), complete)
        rows = sub.error_table(problem.exact_solution, times)
        manifest.add(write_error_table(out / "error.csv", rows))
        manifest.add(plot_errors(out / "error.png", rows))


def cmd_solve(args) -> int:
    cfg, out, manifest = _setup(args, "solve")
    try:
        ladder = _run_ladder(cfg)
    except NonConvergence as exc:
        return _nonconvergence(exc, manifest, out)
    _write_solution_outputs(cfg, ladder, out, manifest)
    manifest.status = "ok"
    manifest.write()
    print(f"solved {len(ladder.levels)} level(s); outputs in {out}")
    return EXIT_OK


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", name).strip("_")


def cmd_verify(args) -> int:
    cfg, out, manifest = _setup(args, "verify")
    if not cfg.diagnostics:
        raise ConfigError("no diagnostics selected; nothing to verify")
    try:
        ladder = _run_ladder(cfg)
    except NonConvergence as exc:
        return _nonconvergence(exc, manifest, out)
    if any(not s.complete for s in ladder.levels):
        raise ConfigError("verification needs every iterate; set thin = 1")
    report = run_diagnostics(ladder, cfg.diagnostics, seed=cfg.seed,
                             candidate_scale=cfg.candidate_scale, trials=cfg.trials)
    manifest.add(write_checks(out / "checks.csv", report))
    for c in report:
        if c.table:
            manifest.add(write_check_table(out / f"check_{_slug(c.name)}.csv", c))
    summary = out / "summary.txt"
    summary.write_text(report.summary() + "\n", encoding="utf-8")
    manifest.add(summary)
    manifest.add(plot_checks(out / "checks.png", report))
    manifest.record_checks(report)
    manifest.status = "ok" if report.passed else "checks_failed"
    manifest.write()
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_convergence(args) -> int:
    cfg, out, manifest = _setup(args, "convergence")
    if len(cfg.h_values) < 3:
        raise ConfigError("convergence study needs at least 3 ladder levels")
    try:
        ladder = _run_ladder(cfg)
    except NonConvergence as exc:
        return _nonconvergence(exc, manifest, out)
    if any(not s.complete for s in ladder.levels):
        raise ConfigError("convergence study needs every iterate; set thin = 1")
    times = ladder_times(ladder, cfg.snapshot_times)
    rows = ladder.cauchy_table(times)
    manifest.add(write_cauchy_table(out / "cauchy.csv", rows))
    for t in times:
        sel = [r for r in rows if r[2] == t]
        manifest.add(write_two_column(out / f"cauchy_t{t:g}.csv", ("h", "difference"),
                                      [r[1] for r in sel], [r[3] for r in sel]))
    manifest.add(plot_cauchy(out / "cauchy.png", rows))
    problem = cfg.test_problem()
    if problem is not None and problem.exact_solution is not None:
        err = ladder.error_table(problem.exact_solution, times)
        manifest.add(write_error_table(out / "order.csv", err))
        for t in times:
            sel = [r for r in err if r[1] == t]
            manifest.add(write_two_column(out / f"error_t{t:g}.csv", ("h", "error"),
                                          [r[0] for r in sel], [r[2] for r in sel]))
        manifest.add(plot_errors(out / "order.png", err))
    manifest.status = "ok"
    manifest.write()
    for r in rows:
        print(f"h={r[0]:g} -> {r[1]:g}  t={r[2]:g}  diff={r[3]:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rothe",
        description="Implicit time stepping for nonlinear parabolic PDEs in non-divergence form.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, text in (
        ("solve", cmd_solve, "run the ladder and write snapshots and solver telemetry"),
        ("verify", cmd_verify, "run the configured diagnostics; exit 1 if any fails"),
        ("convergence", cmd_convergence, "Cauchy and observed-order tables over the ladder"),
    ):
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="INI configuration file")
        p.add_argument("--out", help="output directory (overrides [run] output_dir)")
        p.add_argument("--seed", type=int, help="global seed (overrides [run] seed)")
        p.add_argument("--levels", type=int, help="number of ladder levels to use")
        p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
