"""Performance tables and fusion-curve plot data.

Tables carry full-precision values; text rendering rounds them and the
best cell of every row is recomputed from the values each time a table is
emitted.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .experiments import CRITERIA, SUMMARY_COLUMNS, EvaluationReport, FusionCurve, best_summary

CRITERION_TITLES = {
    "RMSE": "Root Mean Square Error",
    "PLCC": "Pearson Correlation Coefficient",
    "SRCC": "Spearman Correlation Coefficient",
}
CURVE_CSV_HEADER = ("size", "learner", "criterion", "mean", "std", "sigline")


def _check_criterion(criterion):
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")


def format_value(criterion: str, value) -> str:
    """RMSE keeps two or three significant digits, correlations three decimals."""
    if value is None or not math.isfinite(value):
        return "-"
    if criterion != "RMSE":
        return f"{value:.3f}"
    mag = abs(value)
    decimals = 2 if mag < 10 else 1 if mag < 100 else 0
    return f"{value:.{decimals}f}"


def best_indices(criterion: str, values) -> list[int]:
    """Positions of the extremal finite value(s); exact ties are all marked."""
    finite = [(v, i) for i, v in enumerate(values) if v is not None and math.isfinite(v)]
    if not finite:
        return []
    target = min(v for v, _ in finite) if criterion == "RMSE" else max(v for v, _ in finite)
    return [i for v, i in finite if v == target]


@dataclass(frozen=True)
class PerformanceTable:
    title: str
    criterion: str
    rows: tuple
    columns: tuple
    cells: tuple            # rows x columns, float or None
    sources: tuple | None = None  # optional method id behind each cell

    def __post_init__(self):
        _check_criterion(self.criterion)
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "columns", tuple(self.columns))
        cells = tuple(tuple(None if v is None else float(v) for v in row) for row in self.cells)
        if len(cells) != len(self.rows) or any(len(r) != len(self.columns) for r in cells):
            raise ValueError("cell grid does not match row/column labels")
        object.__setattr__(self, "cells", cells)
        if self.sources is not None:
            object.__setattr__(self, "sources", tuple(tuple(r) for r in self.sources))

    def best(self) -> list[list[int]]:
        return [best_indices(self.criterion, row) for row in self.cells]

    def to_json(self) -> dict:
        d = {
            "title": self.title,
            "criterion": self.criterion,
            "rows": list(self.rows),
            "columns": list(self.columns),
            "cells": [[v if v is None or math.isfinite(v) else None for v in row]
                      for row in self.cells],
            "best": self.best(),
        }
        if self.sources is not None:
            d["sources"] = [list(r) for r in self.sources]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PerformanceTable":
        # "best" is derived, so it is ignored here and recomputed on output
        sources = d.get("sources")
        return cls(d["title"], d["criterion"], d["rows"], d["columns"], d["cells"],
                   None if sources is None else tuple(tuple(r) for r in sources))

    def render_text(self) -> str:
        best = self.best()
        lines = [self.title, "",
                 "| | " + " | ".join(self.columns) + " |",
                 "|---|" + "---|" * len(self.columns)]
        for r, label in enumerate(self.rows):
            cells = []
            for c, v in enumerate(self.cells[r]):
                text = format_value(self.criterion, v)
                cells.append(f"**{text}**" if c in best[r] else text)
            lines.append(f"| {label} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def _group_methods(report: EvaluationReport, group):
    if group is None:
        return list(report.methods)
    prefix = group + ":"
    return [m for m in report.methods
            if m.startswith(prefix) and m != f"{group}:boost" and ":fuse:" not in m]


def performance_table(report: EvaluationReport, criterion: str, group="existing",
                      databases=None, title=None) -> PerformanceTable:
    """One row per database, one column per method of ``group``."""
    _check_criterion(criterion)
    methods = _group_methods(report, group)
    databases = list(report.databases if databases is None else databases)
    cells = []
    for db in databases:
        row = []
        for m in methods:
            e = report.entries.get((db, m, criterion))
            row.append(None if e is None or not math.isfinite(e.mean) else e.mean)
        cells.append(row)
    columns = [m.split(":", 1)[1] if group is not None else m for m in methods]
    return PerformanceTable(title or CRITERION_TITLES[criterion], criterion,
                            databases, columns, cells)


def emit_performance_table(report: EvaluationReport, criterion: str, group="existing",
                           databases=None, title=None):
    """Return (text, json) for one criterion block."""
    table = performance_table(report, criterion, group, databases, title)
    return table.render_text(), table.to_json()


def summary_table(report: EvaluationReport, criterion: str, registry) -> PerformanceTable:
    """Best existing/regressed vs boosted values per database."""
    _check_criterion(criterion)
    summary = best_summary(report, registry)
    columns = [c for c in SUMMARY_COLUMNS
               if any(c in summary[db][criterion] for db in summary)]
    cells, sources = [], []
    for db in report.databases:
        row, src = [], []
        for c in columns:
            cell = summary[db][criterion].get(c)
            row.append(None if cell is None else cell[0])
            src.append(None if cell is None else cell[1])
        cells.append(row)
        sources.append(src)
    return PerformanceTable(CRITERION_TITLES[criterion], criterion, report.databases,
                            columns, cells, sources)


# -- fusion curves ------------------------------------------------------------

def _num(x) -> str:
    return "" if x is None or not math.isfinite(x) else repr(float(x))


def curve_rows(curve: FusionCurve):
    """Plot-data rows in criterion, learner, size order."""
    rows = []
    for crit in CRITERIA:
        sig = curve.significance_line.get(crit)
        for lr in curve.learners:
            for s in curve.sizes:
                key = (s, lr, crit)
                if key not in curve.stats:
                    continue
                mean, std = curve.stats[key]
                rows.append((s, lr, crit, mean, std, sig))
    return rows


def emit_fusion_curve(curve: FusionCurve):
    """Return (json, csv text) for one incremental-fusion curve."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_CSV_HEADER)
    for s, lr, crit, mean, std, sig in curve_rows(curve):
        w.writerow([s, lr, crit, _num(mean), _num(std), _num(sig)])
    return curve.to_json(), buf.getvalue()


def parse_fusion_csv(text: str):
    """Inverse of the CSV emission: (stats, significance_line)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CURVE_CSV_HEADER:
        raise ValueError(f"bad curve CSV header {header!r}")
    stats, sig = {}, {}
    for row in reader:
        if not row:
            continue
        s, lr, crit, mean, std, line = row
        stats[(int(s), lr, crit)] = (float(mean) if mean else float("nan"),
                                     float(std) if std else float("nan"))
        sig[crit] = float(line) if line else None
    return stats, sig
