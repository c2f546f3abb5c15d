"""PNG figures rendered next to the CSV output.

Figures are built on the object-oriented Agg canvas so nothing touches
global pyplot state; metadata is stripped to keep files reproducible.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .driver import RefinementLadder, RotheSequence, interpolate

__all__ = ["plot_snapshots", "plot_increments", "plot_cauchy", "plot_errors", "plot_checks"]


def _figure(width=6.0, height=4.0):
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def plot_snapshots(path, seq: RotheSequence, times: Sequence[float]) -> Path:
    """Line plots in 1D; a filled contour of the last snapshot in 2D."""
    fig = _figure()
    ax = fig.add_subplot(111)
    grid = seq.grid
    if grid.dim == 1:
        x = grid.axis_coords(0, include_boundary=True)
        for t in times:
            ax.plot(x, interpolate(seq, t).full(), label=f"t = {t:g}")
        ax.set_xlabel("x")
        ax.set_ylabel("U_h")
        ax.legend(frameon=False)
    else:
        x = grid.axis_coords(0, include_boundary=True)
        y = grid.axis_coords(1, include_boundary=True)
        u = interpolate(seq, times[-1]).full()
        cs = ax.contourf(x, y, u.T, levels=20)
        fig.colorbar(cs, ax=ax)
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    ax.set_title(f"h = {seq.h:g}")
    return _save(fig, path)


def plot_increments(path, ladder: RefinementLadder) -> Path:
    """``||z_{n+1} - z_n|| / h`` against ``t`` for every level."""
    fig = _figure()
    ax = fig.add_subplot(111)
    for seq in ladder.levels:
        w = np.asarray(seq.increment_norms) / seq.h
        ax.plot(seq.h * np.arange(1, len(w) + 1), w, label=f"h = {seq.h:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("increment / h")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_cauchy(path, rows) -> Path:
    """Cauchy differences against the finer step, one line per time."""
    fig = _figure()
    ax = fig.add_subplot(111)
    for t in sorted({r[2] for r in rows}):
        sel = [(r[1], r[3]) for r in rows if r[2] == t and r[3] > 0]
        if sel:
            hs, ds = zip(*sel)
            ax.loglog(hs, ds, "o-", label=f"t = {t:g}")
    ax.set_xlabel("h (finer level)")
    ax.set_ylabel("sup |U_h - U_h/2|")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(frameon=False)
    return _save(fig, path)


def plot_errors(path, rows) -> Path:
    """Error against the exact solution, one line per time."""
    fig = _figure()
    ax = fig.add_subplot(111)
    for t in sorted({r[1] for r in rows}):
        sel = [(r[0], r[2]) for r in rows if r[1] == t and r[2] > 0]
        if sel:
            hs, es = zip(*sel)
            ax.loglog(hs, es, "o-", label=f"t = {t:g}")
    ax.set_xlabel("h")
    ax.set_ylabel("sup error")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(frameon=False)
    return _save(fig, path)


def plot_checks(path, report) -> Path:
    """Horizontal bars of each check's margin relative to its tolerance."""
    checks = [c for c in report if np.isfinite(c.margin)]
    fig = _figure(6.0, max(2.0, 0.25 * len(checks) + 1.0))
    ax = fig.add_subplot(111)
    names = [c.name for c in checks]
    vals = [c.margin + c.tolerance for c in checks]
    colors = ["tab:green" if c.passed else "tab:red" for c in checks]
    ax.barh(range(len(checks)), vals, color=colors)
    ax.set_yticks(range(len(checks)))
    ax.set_yticklabels(names, fontsize=7)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xscale("symlog", linthresh=1e-12)
    ax.set_xlabel("margin + tolerance")
    return _save(fig, path)
