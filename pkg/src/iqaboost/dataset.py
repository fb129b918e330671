"""Database manifests, category bookkeeping and per-category count validation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DuplicationError, ParseError

CATEGORIES = (
    "compression",
    "noise",
    "communication",
    "blur",
    "color",
    "global",
    "local",
)

MANIFEST_HEADER = (
    "stimulus_id",
    "reference_path",
    "distorted_path",
    "subjective_score",
    "category",
    "database_id",
)

# Distorted-image counts per category. TID13 categories overlap (lossy
# compression of noisy images is counted under both compression and noise),
# so its column sums to 3125 rather than the 3000 images in the archive.
PUBLISHED_COUNTS = {
    "LIVE": {"compression": 460, "noise": 174, "communication": 174, "blur": 174,
             "color": 0, "global": 0, "local": 0},
    "MULTI": {"compression": 180, "noise": 180, "communication": 0, "blur": 315,
              "color": 0, "global": 0, "local": 0},
    "TID13": {"compression": 375, "noise": 1375, "communication": 250, "blur": 250,
              "color": 375, "global": 250, "local": 250},
}


@dataclass(frozen=True)
class StimulusRecord:
    stimulus_id: str
    reference_path: str
    distorted_path: str
    subjective_score: float
    category: str
    database_id: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if not math.isfinite(self.subjective_score):
            raise ValueError(f"non-finite subjective score for {self.stimulus_id!r}")


@dataclass(frozen=True)
class Database:
    database_id: str
    records: tuple[StimulusRecord, ...]
    score_scale: tuple[float, float] = field(default=None)

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        if not records:
            raise ValueError("database has no records")
        seen = set()
        for rec in records:
            if rec.database_id != self.database_id:
                raise ValueError(
                    f"record {rec.stimulus_id!r} belongs to {rec.database_id!r}, "
                    f"not {self.database_id!r}"
                )
            if rec.stimulus_id in seen:
                raise DuplicationError(f"duplicate stimulus_id {rec.stimulus_id!r}")
            seen.add(rec.stimulus_id)
        scores = [r.subjective_score for r in records]
        if self.score_scale is None:
            object.__setattr__(self, "score_scale", (min(scores), max(scores)))
        lo, hi = self.score_scale
        for rec in records:
            if not lo <= rec.subjective_score <= hi:
                raise ValueError(
                    f"score {rec.subjective_score} of {rec.stimulus_id!r} outside "
                    f"scale [{lo}, {hi}]"
                )

    def __len__(self):
        return len(self.records)

    @property
    def stimulus_ids(self) -> list[str]:
        return [r.stimulus_id for r in self.records]

    @property
    def subjective_scores(self) -> list[float]:
        return [r.subjective_score for r in self.records]


def _format_score(value: float) -> str:
    return repr(float(value))


def parse_manifest(text: str, score_scale=None) -> Database:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty manifest", row=1) from None
    if tuple(h.strip() for h in header) != MANIFEST_HEADER:
        raise ParseError(f"bad header {header!r}", row=1)

    records = []
    seen = {}
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise ParseError(f"expected {len(MANIFEST_HEADER)} columns, got {len(row)}", row=row_no)
        sid, ref, dist, score_text, category, db_id = row
        try:
            score = float(score_text)
        except ValueError:
            raise ParseError(f"non-numeric score {score_text!r}", row=row_no) from None
        if not math.isfinite(score):
            raise ParseError(f"non-finite score {score_text!r}", row=row_no)
        if category not in CATEGORIES:
            raise ParseError(f"unknown category {category!r}", row=row_no)
        if sid in seen:
            raise DuplicationError(
                f"duplicate stimulus_id {sid!r} in rows {seen[sid]} and {row_no}"
            )
        seen[sid] = row_no
        records.append(StimulusRecord(sid, ref, dist, score, category, db_id))

    if not records:
        raise ParseError("manifest has no data rows", row=2)
    db_ids = {r.database_id for r in records}
    if len(db_ids) != 1:
        raise ParseError(f"manifest mixes databases {sorted(db_ids)}")
    return Database(records[0].database_id, tuple(records), score_scale)


def load_manifest(path, score_scale=None) -> Database:
    """Read a manifest CSV; record order and path strings are kept as written."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_manifest(text, score_scale)


def format_manifest(db: Database) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for r in db.records:
        writer.writerow([r.stimulus_id, r.reference_path, r.distorted_path,
                         _format_score(r.subjective_score), r.category, r.database_id])
    return buf.getvalue()


def write_manifest(db: Database, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_manifest(db))


def resolve_path(db_path, manifest_path) -> Path:
    """Resolve a manifest-relative image path for reading."""
    p = Path(db_path)
    if p.is_absolute() or manifest_path is None:
        return p
    return Path(manifest_path).parent / p


def category_counts(db: Database) -> dict[str, int]:
    counts = dict.fromkeys(CATEGORIES, 0)
    for rec in db.records:
        counts[rec.category] += 1
    return counts


@dataclass
class ValidationReport:
    database_id: str
    counts: dict
    expected: dict
    mismatches: list  # (category, actual, expected)
    total: int
    expected_total: int

    @property
    def total_ok(self) -> bool:
        return self.total == self.expected_total

    @property
    def ok(self) -> bool:
        return not self.mismatches and self.total_ok

    def to_text(self) -> str:
        lines = [f"database: {self.database_id}"]
        bad = {m[0] for m in self.mismatches}
        for cat in CATEGORIES:
            status = "MISMATCH" if cat in bad else "ok"
            lines.append(f"{cat}: {self.counts[cat]} expected {self.expected.get(cat, 0)} {status}")
        lines.append(f"total: {self.total} expected {self.expected_total} "
                     f"{'ok' if self.total_ok else 'MISMATCH'}")
        lines.append(f"status: {'PASS' if self.ok else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "database_id": self.database_id,
            "counts": self.counts,
            "expected": self.expected,
            "mismatches": [
                {"category": c, "actual": a, "expected": e} for c, a, e in self.mismatches
            ],
            "total": self.total,
            "expected_total": self.expected_total,
            "total_ok": self.total_ok,
            "ok": self.ok,
        }


def validate_database(db: Database, expected: Mapping[str, int], expected_total=None) -> ValidationReport:
    """Compare per-category counts with ``expected``.

    Categories missing from ``expected`` are expected to be empty. The total
    defaults to the sum of the expected counts.
    """
    unknown = set(expected) - set(CATEGORIES)
    if unknown:
        raise ValueError(f"unknown categories in expected map: {sorted(unknown)}")
    exp = {c: int(expected.get(c, 0)) for c in CATEGORIES}
    counts = category_counts(db)
    mismatches = [(c, counts[c], exp[c]) for c in CATEGORIES if counts[c] != exp[c]]
    if expected_total is None:
        expected_total = sum(exp.values())
    return ValidationReport(db.database_id, counts, exp, mismatches, len(db), int(expected_total))


def load_expected_counts(path):
    """Read an expected-count JSON: category -> count, optional ``total``."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    total = data.pop("total", None)
    return data, total


def make_database(database_id: str, records: Iterable[tuple], score_scale=None) -> Database:
    """Build a Database from (stimulus_id, ref, dist, score, category) tuples."""
    recs = tuple(StimulusRecord(sid, ref, dist, float(s), cat, database_id)
                 for sid, ref, dist, s, cat in records)
    return Database(database_id, recs, score_scale)
