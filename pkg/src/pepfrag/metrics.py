"""Relative errors against ground truth and their summary statistics."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass
from pathlib import Path

CSV_COLUMNS = ("label", "GT_Ha", "Em_Ha", "RE_pct")


class MetricsError(ValueError):
    pass


def relative_error_pct(em: float, gt: float) -> float:
    """|Em - GT| / |GT| * 100."""
    if gt == 0:
        raise MetricsError("relative error undefined for GT = 0")
    return abs(em - gt) / abs(gt) * 100.0


def summarize(values) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation."""
    vals = [float(v) for v in values]
    if not vals:
        raise MetricsError("cannot summarise an empty list")
    if len(vals) < 2:
        raise MetricsError("sample standard deviation needs at least two values")
    return math.fsum(vals) / len(vals), statistics.stdev(vals)


@dataclass(frozen=True)
class ErrorRow:
    label: str
    gt: float | None
    em: float | None
    re_pct: float | None
    status: str = "ok"  # ok | gt_unavailable | failed
    detail: str = ""

    @classmethod
    def from_energies(cls, label: str, gt: float, em: float) -> "ErrorRow":
        return cls(label, gt, em, relative_error_pct(em, gt))


@dataclass(frozen=True)
class ErrorReport:
    rows: tuple[ErrorRow, ...]

    def __post_init__(self) -> None:
        for r in self.rows:
            if r.re_pct is not None and r.re_pct < 0:
                raise MetricsError(f"{r.label!r}: negative relative error")

    @classmethod
    def from_pairs(cls, pairs) -> "ErrorReport":
        """From (label, GT, Em) triples."""
        return cls(tuple(ErrorRow.from_energies(lbl, gt, em) for lbl, gt, em in pairs))

    @property
    def scored(self) -> list[ErrorRow]:
        return [r for r in self.rows if r.re_pct is not None]

    @property
    def mean_re(self) -> float:
        return summarize_mean([r.re_pct for r in self.scored])

    @property
    def std_re(self) -> float:
        return summarize([r.re_pct for r in self.scored])[1]

    def sorted(self) -> "ErrorReport":
        return ErrorReport(tuple(sorted(self.rows, key=lambda r: r.label)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS + ("status",))
        for r in self.rows:
            w.writerow([
                r.label,
                _fmt(r.gt, 5),
                _fmt(r.em, 5),
                _fmt(r.re_pct, 5),
                r.status,
            ])
        return buf.getvalue()

    def to_dict(self) -> dict:
        scored = self.scored
        out = {
            "rows": [
                {"label": r.label, "GT_Ha": r.gt, "Em_Ha": r.em, "RE_pct": r.re_pct,
                 "status": r.status, "detail": r.detail}
                for r in self.rows
            ],
            "n": len(scored),
            "mean_RE_pct": self.mean_re if scored else None,
            "std_RE_pct": self.std_re if len(scored) > 1 else None,
        }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def summarize_mean(values) -> float:
    vals = [float(v) for v in values]
    if not vals:
        raise MetricsError("cannot summarise an empty list")
    return math.fsum(vals) / len(vals)


def _fmt(x: float | None, digits: int) -> str:
    return "" if x is None else f"{x:.{digits}f}"


def read_report_csv(path: str | Path) -> ErrorReport:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            def num(key):
                v = rec.get(key, "")
                return float(v) if v not in ("", None) else None
            rows.append(ErrorRow(rec["label"], num("GT_Ha"), num("Em_Ha"), num("RE_pct"),
                                 rec.get("status") or "ok"))
    return ErrorReport(tuple(rows))


@dataclass(frozen=True)
class GoldenDiff:
    label: str
    column: str
    expected: float | None
    actual: float | None

    def __str__(self) -> str:
        return f"{self.label}: {self.column} expected {self.expected} got {self.actual}"


def diff_reports(actual: ErrorReport, golden: ErrorReport, energy_tol: float = 1e-5,
                 re_tol: float = 1e-5) -> list[GoldenDiff]:
    """Row-by-row differences; labels missing on either side are reported too."""
    diffs = []
    have = {r.label: r for r in actual.rows}
    want = {r.label: r for r in golden.rows}
    for label in sorted(set(have) | set(want)):
        a, g = have.get(label), want.get(label)
        if a is None or g is None:
            diffs.append(GoldenDiff(label, "row", None if g is None else 1.0,
                                    None if a is None else 1.0))
            continue
        for col, tol in (("gt", energy_tol), ("em", energy_tol), ("re_pct", re_tol)):
            x, y = getattr(a, col), getattr(g, col)
            if (x is None) != (y is None) or (x is not None and abs(x - y) > tol):
                diffs.append(GoldenDiff(label, col, y, x))
    return diffs
