"""Long-format risk reports and their CSV form."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, field
from pathlib import Path

import numpy as np

CSV_HEADER = ("scenario", "n", "q_n", "p", "psi2", "C", "replicate", "seed", "metric", "value")
AGGREGATE = -1  # replicate index of rows summarising all replicates


def derive_seed(root: int, *key: int) -> int:
    """64-bit seed for the stream identified by ``key`` under ``root``."""
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class RiskRow:
    scenario: str
    n: int
    q_n: int | None
    p: float | None
    psi2: float | None
    C: float | None
    replicate: int
    seed: int
    metric: str
    value: float


@dataclass
class RiskReport:
    rows: list[RiskRow] = field(default_factory=list)
    timings: dict = field(default_factory=dict)  # wall-clock seconds, kept out of the CSV

    def add(self, row: RiskRow):
        self.rows.append(row)

    def extend(self, other: "RiskReport"):
        self.rows.extend(other.rows)
        self.timings.update(other.timings)

    def sorted(self) -> "RiskReport":
        key = lambda r: (r.scenario, r.n, r.replicate, r.metric)
        return RiskReport(sorted(self.rows, key=key), dict(self.timings))

    def select(self, metric: str | None = None, **where) -> list[RiskRow]:
        out = []
        for r in self.rows:
            if metric is not None and r.metric != metric:
                continue
            if all(getattr(r, k) == v for k, v in where.items()):
                out.append(r)
        return out

    def values(self, metric: str, **where) -> np.ndarray:
        return np.array([r.value for r in self.select(metric, **where)], dtype=float)

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        return isinstance(other, RiskReport) and [astuple(r) for r in self.rows] == [astuple(r) for r in other.rows]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % v


def write_risk_csv(report: RiskReport, path) -> None:
    bad = [i for i, r in enumerate(report.rows) if not math.isfinite(r.value)]
    if bad:
        r = report.rows[bad[0]]
        raise ValueError("non-finite value in %d row(s); first: metric %r, n=%d, replicate=%d"
                         % (len(bad), r.metric, r.n, r.replicate))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in report.rows:
            w.writerow([r.scenario, _fmt(r.n), _fmt(r.q_n), _fmt(r.p), _fmt(r.psi2), _fmt(r.C),
                        _fmt(r.replicate), _fmt(r.seed), r.metric, _fmt(r.value)])


def _opt(conv, text):
    return None if text == "" else conv(text)


def read_risk_csv(path) -> RiskReport:
    """Parse a report; columns are matched by header name, in any order."""
    problems = []
    rows = []
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_HEADER if c not in header]
        extra = [c for c in header if c not in CSV_HEADER]
        if missing or extra:
            raise ValueError("line 1: bad header (missing %s, unexpected %s)" % (missing, extra))
        for rec in reader:
            line = reader.line_num
            if None in rec or any(v is None for v in rec.values()):
                problems.append("line %d: expected %d fields" % (line, len(CSV_HEADER)))
                continue
            try:
                value = float(rec["value"])
                if not math.isfinite(value):
                    raise ValueError("non-finite value %r" % rec["value"])
                if not rec["scenario"] or not rec["metric"]:
                    raise ValueError("empty scenario or metric")
                rows.append(RiskRow(
                    scenario=rec["scenario"], n=int(rec["n"]), q_n=_opt(int, rec["q_n"]),
                    p=_opt(float, rec["p"]), psi2=_opt(float, rec["psi2"]), C=_opt(float, rec["C"]),
                    replicate=int(rec["replicate"]), seed=int(rec["seed"]),
                    metric=rec["metric"], value=value))
            except ValueError as exc:
                problems.append("line %d: %s" % (line, exc))
    if problems:
        raise ValueError("malformed rows:\n" + "\n".join(problems))
    return RiskReport(rows)
