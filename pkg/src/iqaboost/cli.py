"""Command-line entry points.

Exit status: 0 success, 1 validation mismatch, 2 usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .dataset import PUBLISHED_COUNTS, load_expected_counts, load_manifest, validate_database
from .errors import IQABoostError
from .experiments import (
    CRITERIA,
    EvaluationReport,
    ExperimentConfig,
    FusionCurve,
    part2_orderings,
    run_existing_study,
    run_fusion_studies,
    run_full_fusion_study,
    run_single_method_study,
    settings_header,
)
from .metrics import (
    NATIVE_METRICS,
    ScoreTable,
    ingest_external_scores,
    merge_fragments,
    registry_from_ids,
    score_record,
    write_scores,
)
from .report import emit_fusion_curve, performance_table, summary_table

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


# -- config and inputs ---------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_study_inputs(config_path):
    """Read a config JSON and the manifests/score files it names.

    Paths inside the config are relative to the config file. Returns
    (cfg, databases, tables, inputs) where ``inputs`` records file digests.
    """
    config_path = Path(config_path)
    raw = json.loads(config_path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    base = config_path.parent
    manifests = raw.pop("manifests", None)
    score_files = raw.pop("score_files", {})
    if not manifests:
        raise UsageError("config needs a non-empty 'manifests' object")
    unknown = set(raw) - set(ExperimentConfig.__dataclass_fields__)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    raw.setdefault("databases", list(manifests))
    cfg = ExperimentConfig.from_json(raw)

    registry = registry_from_ids(cfg.registry)
    dbs, tables, inputs = [], [], {}
    for db_id in cfg.databases:
        if db_id not in manifests:
            raise UsageError(f"no manifest given for database {db_id!r}")
        mpath = base / manifests[db_id]
        db = load_manifest(mpath)
        if db.database_id != db_id:
            raise UsageError(f"manifest {manifests[db_id]} holds database {db.database_id!r}, "
                             f"not {db_id!r}")
        files = score_files.get(db_id, [])
        if isinstance(files, str):
            files = [files]
        fragment = merge_fragments(*(ingest_external_scores(base / f, registry) for f in files))
        table = ScoreTable.from_fragment(fragment, db.stimulus_ids, cfg.registry)
        dbs.append(db)
        tables.append(table)
        inputs[db_id] = {
            "manifest": {"path": manifests[db_id], "sha256": _sha256(mpath)},
            "score_files": [{"path": f, "sha256": _sha256(base / f)} for f in files],
        }
    return cfg, dbs, tables, inputs


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _write(path, text):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _with_inputs(report: EvaluationReport, inputs) -> dict:
    d = report.to_json()
    d["provenance"] = dict(d["provenance"], inputs=inputs)
    return d


# -- subcommands ---------------------------------------------------------------

def cmd_score(args):
    db = load_manifest(args.manifest)
    metrics = args.metrics.split(",") if args.metrics else list(NATIVE_METRICS)
    unknown = [m for m in metrics if m not in NATIVE_METRICS]
    if unknown:
        raise UsageError(f"not natively computed: {unknown}; choose from {list(NATIVE_METRICS)}")
    fragment = {}
    for rec in db.records:
        fragment.update(score_record(rec, metrics, args.manifest))
    write_scores(fragment, args.out)
    print(f"scored {len(db)} stimuli x {len(metrics)} metrics -> {args.out}")
    return EXIT_OK


def cmd_validate(args):
    db = load_manifest(args.manifest)
    if args.expected:
        expected, total = load_expected_counts(args.expected)
    else:
        preset = args.preset or db.database_id
        if preset not in PUBLISHED_COUNTS:
            raise UsageError(f"no published counts for {preset!r}; pass --expected")
        expected, total = PUBLISHED_COUNTS[preset], None
    result = validate_database(db, expected, total)
    sys.stdout.write(_dump(result.to_json()) if args.json else result.to_text())
    return EXIT_OK if result.ok else EXIT_MISMATCH


def cmd_part1(args):
    cfg, dbs, tables, inputs = load_study_inputs(args.config)
    report = None
    for db, table in zip(dbs, tables):
        part = run_single_method_study(db, table, cfg)
        report = part if report is None else report.merge(part)
    _write(args.out, _dump(_with_inputs(report, inputs)))
    print(f"wrote {args.out} (exclusion rate {report.exclusion_rate:.4f})")
    return EXIT_OK if report.valid else EXIT_RUNTIME


def cmd_part2(args):
    cfg, dbs, tables, inputs = load_study_inputs(args.config)
    ranking = None
    if args.part1:
        ranking = EvaluationReport.from_json(json.loads(Path(args.part1).read_text(encoding="utf-8")))
    curves = []
    for db, table in zip(dbs, tables):
        source = ranking if ranking is not None else run_existing_study(db, table, cfg)
        orderings = part2_orderings(source, db.database_id, cfg.registry)
        curves.extend(run_fusion_studies(db, table, cfg, orderings).values())
    header = dict(settings_header(cfg), inputs=inputs)
    payload = {"format": "iqaboost.curves", "version": 1, "provenance": header,
               "curves": [c.to_json() for c in curves]}
    _write(args.out, _dump(payload))
    if args.csv_dir:
        for c in curves:
            _write(Path(args.csv_dir) / f"curve_{c.database}_{c.ranked_by}.csv", emit_fusion_curve(c)[1])
    print(f"wrote {args.out} ({len(curves)} curves)")
    return EXIT_OK


def cmd_fuse(args):
    cfg, dbs, tables, inputs = load_study_inputs(args.config)
    report = run_full_fusion_study(dbs, tables, cfg)
    _write(args.out, _dump(_with_inputs(report, inputs)))
    print(f"wrote {args.out} (exclusion rate {report.exclusion_rate:.4f})")
    return EXIT_OK if report.valid else EXIT_RUNTIME


def cmd_report(args):
    out = Path(args.out_dir)
    written = []
    if args.input:
        report = EvaluationReport.from_json(json.loads(Path(args.input).read_text(encoding="utf-8")))
        groups = [g for g in ("existing", "nn", "svr")
                  if any(m.startswith(g + ":") and not m.endswith(":boost") for m in report.methods)]
        registry = report.provenance.get("config", {}).get("registry")
        has_boost = any(m.endswith(":boost") for m in report.methods)
        for crit in CRITERIA:
            tables = [(g, performance_table(report, crit, g)) for g in groups]
            if has_boost and registry:
                tables.append(("summary", summary_table(report, crit, registry)))
            for name, table in tables:
                stem = f"{name}_{crit.lower()}"
                _write(out / f"{stem}.txt", table.render_text())
                _write(out / f"{stem}.json", _dump(table.to_json()))
                written += [f"{stem}.txt", f"{stem}.json"]
    if args.curves:
        payload = json.loads(Path(args.curves).read_text(encoding="utf-8"))
        for d in payload["curves"]:
            curve = FusionCurve.from_json(d)
            name = f"curve_{curve.database}_{curve.ranked_by}.csv"
            _write(out / name, emit_fusion_curve(curve)[1])
            written.append(name)
    if not written:
        raise UsageError("report needs --input and/or --curves")
    for name in written:
        print(out / name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iqaboost", description="Quality-estimator boosting toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("score", help="compute native metrics over a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="score CSV to write")
    s.add_argument("--metrics", help=f"comma-separated subset of {','.join(NATIVE_METRICS)}")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("validate", help="check category counts of a manifest")
    s.add_argument("--manifest", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--expected", help="JSON of category -> count, optional 'total'")
    g.add_argument("--preset", choices=sorted(PUBLISHED_COUNTS))
    s.add_argument("--json", action="store_true", help="print the JSON report")
    s.set_defaults(func=cmd_validate)

    for name, func, helptext in (
        ("part1", cmd_part1, "existing and single-metric regressed methods"),
        ("fuse", cmd_fuse, "existing, best regressed and all-metric boosting"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True)
        s.add_argument("--out", required=True, help="report JSON to write")
        s.set_defaults(func=func)

    s = sub.add_parser("part2", help="worst-first incremental fusion curves")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="curves JSON to write")
    s.add_argument("--part1", help="reuse orderings from this part1 report")
    s.add_argument("--csv-dir", help="also write plot-data CSVs here")
    s.set_defaults(func=cmd_part2)

    s = sub.add_parser("report", help="render tables and plot data from result files")
    s.add_argument("--input", help="report JSON from part1 or fuse")
    s.add_argument("--curves", help="curves JSON from part2")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"iqaboost: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IQABoostError, OSError, ValueError, KeyError) as exc:
        print(f"iqaboost: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
