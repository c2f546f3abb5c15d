"""Result containers shared by all checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

__all__ = ["CheckResult", "DiagnosticsReport", "ratio_spread"]


@dataclass
class CheckResult:
    """One named check.

    ``passed`` is derived: it holds exactly when ``margin >= -tolerance``.
    ``margin`` is oriented so that positive means "bound respected".
    """

    name: str
    measured: float
    bound: float
    margin: float
    tolerance: float = 0.0
    details: dict[str, Any] = field(default_factory=dict)
    table: list[tuple] = field(default_factory=list)
    table_header: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return bool(self.margin >= -self.tolerance) and not math.isnan(self.margin)

    def row(self) -> tuple:
        return (self.name, self.measured, self.bound, self.margin, self.tolerance, self.passed)

    def __str__(self):
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.name}: measured={self.measured:.6g} bound={self.bound:.6g} "
                f"margin={self.margin:.3g} (tol {self.tolerance:.3g})")


@dataclass
class DiagnosticsReport:
    """Ordered collection of :class:`CheckResult`."""

    checks: list[CheckResult] = field(default_factory=list)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    def extend(self, other: "DiagnosticsReport") -> None:
        self.checks.extend(other.checks)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __iter__(self):
        return iter(self.checks)

    def __len__(self):
        return len(self.checks)

    def summary(self) -> str:
        lines = [str(c) for c in self.checks]
        n_fail = sum(not c.passed for c in self.checks)
        lines.append(f"{len(self.checks) - n_fail}/{len(self.checks)} checks passed")
        return "\n".join(lines)


def ratio_spread(values) -> float:
    """``max/min`` of nonnegative values; 1 when all are zero, inf when only some are."""
    vals = [float(v) for v in values]
    hi, lo = max(vals), min(vals)
    if hi == 0:
        return 1.0
    if lo == 0:
        return math.inf
    return hi / lo
