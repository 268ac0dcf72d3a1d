"""Structured experiment reports with deterministic JSON/CSV serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class StatRecord:
    """One reported statistic with optional error bar and pass criterion."""

    name: str
    value: float
    std_error: float | None = None
    tolerance: float | None = None
    passed: bool | None = None

    def check(self) -> bool | None:
        """Recompute the pass flag from value and tolerance (|value| <= tol)."""
        if self.tolerance is None:
            return None
        return abs(self.value) <= self.tolerance


@dataclass
class ExperimentReport:
    """Inputs, statistics, and pass flags for one experiment run.

    Wall-clock duration is carried on the object but excluded from the
    deterministic report files; it goes to a separate timing sidecar so
    that re-runs with the same seed are byte-identical.
    """

    name: str
    inputs: dict
    stats: list[StatRecord] = field(default_factory=list)
    duration_seconds: float | None = None

    def add(
        self,
        name: str,
        value: float,
        std_error: float | None = None,
        tolerance: float | None = None,
        passed: bool | None = None,
    ) -> StatRecord:
        rec = StatRecord(
            name,
            float(value),
            None if std_error is None else float(std_error),
            None if tolerance is None else float(tolerance),
            None if passed is None else bool(passed),
        )
        self.stats.append(rec)
        return rec

    @property
    def all_passed(self) -> bool:
        return all(s.passed for s in self.stats if s.passed is not None)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "name": self.name,
            "inputs": self.inputs,
            "stats": [
                {
                    "name": s.name,
                    "value": s.value,
                    "std_error": s.std_error,
                    "tolerance": s.tolerance,
                    "passed": s.passed,
                }
                for s in self.stats
            ],
        }
        if include_timing:
            out["duration_seconds"] = self.duration_seconds
        return out

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        rep = cls(name=data["name"], inputs=data["inputs"])
        rep.duration_seconds = data.get("duration_seconds")
        for s in data["stats"]:
            rep.add(s["name"], s["value"], s["std_error"], s["tolerance"], s["passed"])
        return rep

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["statistic", "value", "std_error", "tolerance", "passed"])
        for s in self.stats:
            writer.writerow(
                [
                    s.name,
                    _fmt(s.value),
                    "" if s.std_error is None else _fmt(s.std_error),
                    "" if s.tolerance is None else _fmt(s.tolerance),
                    "" if s.passed is None else str(s.passed).lower(),
                ]
            )
        return buf.getvalue()

    def write(self, outdir: str | Path) -> dict[str, Path]:
        """Write report.json + report.csv (deterministic) and timing.json."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "json": outdir / "report.json",
            "csv": outdir / "report.csv",
            "timing": outdir / "timing.json",
        }
        paths["json"].write_text(self.to_json() + "\n")
        paths["csv"].write_text(self.to_csv())
        paths["timing"].write_text(
            json.dumps({"duration_seconds": self.duration_seconds}) + "\n"
        )
        return paths


def _fmt(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return repr(float(x))
