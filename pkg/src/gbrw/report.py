"""Structured pass/fail reports shared by the checkers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats to strict-JSON values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


@dataclass
class Check:
    name: str
    passed: bool
    witness: dict | None = None
    margin: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        d = {"check": self.name, "pass": self.passed, "witness": self.witness, "margin": self.margin}
        if self.note:
            d["note"] = self.note
        return jsonable(d)


@dataclass
class Report:
    """Ordered list of checks plus free-form ``info``.

    Every failing check carries a witness that reproduces the violation.
    """

    title: str
    checks: list[Check] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, witness=None, margin=None, note="") -> Check:
        c = Check(name, bool(passed), witness, margin, note)
        self.checks.append(c)
        return c

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name):
        return any(c.name == name for c in self.checks)

    def to_dict(self) -> dict:
        return jsonable(
            {
                "title": self.title,
                "pass": self.passed,
                "checks": [c.to_dict() for c in self.checks],
                "info": self.info,
            }
        )

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


# Names used by the individual modules.
AssumptionReport = Report
RunReport = Report
