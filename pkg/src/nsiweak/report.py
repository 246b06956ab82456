"""Certification reports: named checks with margins and witness points."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

__all__ = ["Check", "Report", "clean_float"]


def clean_float(x):
    """JSON-safe float: non-finite values become strings."""
    if x is None:
        return None
    x = float(x)
    if math.isfinite(x):
        return x
    return str(x)


@dataclass
class Check:
    """One certified clause.

    ``margin`` is signed: non-negative (or positive, for strict clauses)
    when the clause holds.  ``witness`` is the worst point seen.
    """

    name: str
    clause: str
    passed: bool
    margin: float
    witness: tuple | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = bool(self.passed)
        d["margin"] = clean_float(self.margin)
        if self.witness is not None:
            d["witness"] = [clean_float(w) for w in self.witness]
        return d


@dataclass
class Report:
    checks: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, other: "Report", prefix: str = "") -> None:
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.clause, c.passed, c.margin, c.witness, c.detail))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def first_failure(self) -> Check | None:
        return next((c for c in self.checks if not c.passed), None)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks],
                "meta": {k: clean_float(v) if isinstance(v, float) else v for k, v in self.meta.items()}}
