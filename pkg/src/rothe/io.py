"""Deterministic CSV output and the run manifest.

CSV files are UTF-8, comma separated, ``\\n`` line endings, header row
first; floats use 17 significant digits so they round-trip exactly.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .diagnostics.report import CheckResult, DiagnosticsReport
from .driver import RefinementLadder, RotheSequence, interpolate

__all__ = ["fmt", "write_csv", "sha256", "RunManifest", "write_snapshots", "write_telemetry",
           "write_checks", "write_error_table", "write_cauchy_table", "write_two_column",
           "CHECK_COLUMNS"]

CHECK_COLUMNS = ("check", "measured", "bound", "margin", "tolerance", "passed")


def fmt(value) -> str:
    """Canonical text for one CSV cell."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if value is None:
        return ""
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """Collects outputs of one command and writes ``manifest.json`` atomically."""

    def __init__(self, out_dir, command: str, config_text: str, version: str):
        self.out_dir = Path(out_dir)
        self.command = command
        self.config_text = config_text
        self.version = version
        self.started = _now()
        self.files: list[Path] = []
        self.checks: list[dict] = []
        self.status = "running"
        self.notes: list[str] = []

    def add(self, path) -> Path:
        path = Path(path)
        if path not in self.files:
            self.files.append(path)
        return path

    def record_checks(self, report: DiagnosticsReport) -> None:
        self.checks = [{"name": c.name, "passed": c.passed, "margin": fmt(c.margin)}
                       for c in report]

    def write(self) -> Path:
        inventory = []
        for p in self.files:
            if p.exists():
                inventory.append({"path": p.relative_to(self.out_dir).as_posix(),
                                  "sha256": sha256(p), "bytes": p.stat().st_size})
        doc = {
            "command": self.command,
            "artifact_version": self.version,
            "started": self.started,
            "finished": _now(),
            "status": self.status,
            "notes": self.notes,
            "config": self.config_text,
            "checks": self.checks,
            "files": inventory,
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        target = self.out_dir / "manifest.json"
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=".manifest-", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return target


def _coord_header(dim: int) -> tuple[str, ...]:
    return ("x", "y")[:dim]


def write_snapshots(path, levels: Sequence[RotheSequence], times: Sequence[float]) -> Path:
    """Columns ``h, t, x[, y], u`` for every level and snapshot time."""
    def rows():
        for seq in levels:
            pts = seq.grid.points
            for t in times:
                u = interpolate(seq, t).flat
                for p, v in zip(pts, u):
                    yield (seq.h, float(t), *p, v)
    dim = levels[0].grid.dim
    return write_csv(path, ("h", "t", *_coord_header(dim), "u"), rows())


def write_telemetry(path, levels: Sequence[RotheSequence]) -> Path:
    header = ("h", "step", "t", "method", "iterations", "residual", "converged",
              "switched_from", "increment_norm")

    def rows():
        for seq in levels:
            for n, (rep, w) in enumerate(zip(seq.reports, seq.increment_norms), start=1):
                yield (seq.h, n, n * seq.h, rep.method_used, rep.iterations,
                       rep.final_residual_norm, rep.converged, rep.switched_from, w)
    return write_csv(path, header, rows())


def write_checks(path, report: DiagnosticsReport) -> Path:
    return write_csv(path, CHECK_COLUMNS, (c.row() for c in report))


def write_check_table(path, check: CheckResult) -> Path:
    return write_csv(path, check.table_header, check.table)


def write_error_table(path, rows) -> Path:
    return write_csv(path, ("h", "t", "error", "observed_order"), rows)


def write_cauchy_table(path, rows) -> Path:
    return write_csv(path, ("h_coarse", "h_fine", "t", "difference"), rows)


def write_two_column(path, header: tuple[str, str], xs, ys) -> Path:
    return write_csv(path, header, zip(xs, ys))


def ladder_times(ladder: RefinementLadder, requested: Sequence[float]) -> tuple[float, ...]:
    """Snapshot times: the configured ones, else quarter points of the horizon."""
    if requested:
        return tuple(float(t) for t in requested)
    T = ladder.finest.T
    return (0.25 * T, 0.5 * T, T)
