import json

import pytest

from iqaboost.experiments import (
    EvaluationReport,
    ExperimentConfig,
    FusionCurve,
    ReportEntry,
    run_full_fusion_study,
    run_incremental_fusion_study,
)
from iqaboost.metrics import DEFAULT_REGISTRY
from iqaboost.report import (
    CURVE_CSV_HEADER,
    PerformanceTable,
    emit_fusion_curve,
    emit_performance_table,
    format_value,
    parse_fusion_csv,
    performance_table,
    summary_table,
)
from iqaboost.synthetic import make_synthetic_benchmark

# Published existing-method results (RMSE and PLCC blocks).
PUBLISHED = {
    "RMSE": {
        "LIVE": (8.60, 6.92, 6.57, 7.51, 7.42, 11.3, 7.09, 7.53, 7.19, 6.79, 6.75),
        "MULTI": (12.7, 11.2, 10.7, 11.0, 11.2, 18.8, 10.0, 8.68, 10.7, 9.89, 9.24),
        "TID13": (0.87, 0.65, 0.69, 0.76, 0.69, 1.20, 0.68, 0.61, 0.68, 0.64, 0.61),
    },
    "PLCC": {
        "LIVE": (0.927, 0.953, 0.958, 0.945, 0.947, 0.871, 0.951, 0.945, 0.950, 0.955, 0.956),
        "MULTI": (0.737, 0.799, 0.819, 0.813, 0.803, 0.406, 0.846, 0.887, 0.820, 0.850, 0.871),
        "TID13": (0.705, 0.850, 0.827, 0.788, 0.830, 0.228, 0.831, 0.866, 0.832, 0.854, 0.868),
    },
}


def published_report():
    entries = {}
    for crit, rows in PUBLISHED.items():
        for db, vals in rows.items():
            for mid, v in zip(DEFAULT_REGISTRY, vals):
                key = (db, f"existing:{mid}", crit)
                entries[key] = ReportEntry(db, key[1], crit, v, 0.0, 1, 0, [v])
    return EvaluationReport(entries, {}, ["LIVE", "MULTI", "TID13"],
                            [f"existing:{m}" for m in DEFAULT_REGISTRY])


def bold_cell(table_json, row):
    r = table_json["rows"].index(row)
    return [(table_json["columns"][c], table_json["cells"][r][c]) for c in table_json["best"][r]]


def test_bold_lands_on_published_best():
    rep = published_report()
    text, js = emit_performance_table(rep, "RMSE")
    assert bold_cell(js, "LIVE") == [("PSNR-HMA", 6.57)]
    assert "**6.57**" in text
    text, js = emit_performance_table(rep, "PLCC")
    assert bold_cell(js, "TID13") == [("UNIQUE", 0.868)]
    assert "**0.868**" in text and "**0.887**" in text


def test_single_method_bolded_everywhere():
    entries = {(db, "existing:PSNR", "SRCC"): ReportEntry(db, "existing:PSNR", "SRCC", v, 0, 1, 0, [v])
               for db, v in (("A", 0.5), ("B", 0.9))}
    _, js = emit_performance_table(EvaluationReport(entries, {}, ["A", "B"], ["existing:PSNR"]), "SRCC")
    assert js["best"] == [[0], [0]]


def test_table_json_roundtrip():
    _, js = emit_performance_table(published_report(), "PLCC")
    assert PerformanceTable.from_json(json.loads(json.dumps(js))).to_json() == js


def test_bold_recomputed_not_carried():
    _, js = emit_performance_table(published_report(), "RMSE")
    js["best"] = [[0], [0], [0]]
    assert PerformanceTable.from_json(js).to_json()["best"] != js["best"]


def test_formatting():
    assert format_value("RMSE", 6.5749) == "6.57"
    assert format_value("RMSE", 11.34) == "11.3"
    assert format_value("RMSE", 0.6129) == "0.61"
    assert format_value("PLCC", 0.86849) == "0.868"
    assert format_value("SRCC", None) == "-"


def test_missing_cells_render_as_dash():
    t = PerformanceTable("t", "RMSE", ["A"], ["x", "y"], [[None, 2.0]])
    assert t.best() == [[1]]
    assert "| A | - | **2.00** |" in t.render_text()


@pytest.fixture(scope="module")
def curve():
    db, table = make_synthetic_benchmark(n=60, seed=1)
    cfg = ExperimentConfig(runs=2, registry=table.metric_ids)
    return run_incremental_fusion_study(db, table, cfg, ["S5", "S4", "S3"])


def test_curve_csv_roundtrip(curve):
    js, text = emit_fusion_curve(curve)
    assert text.splitlines()[0] == ",".join(CURVE_CSV_HEADER)
    stats, sig = parse_fusion_csv(text)
    assert stats.keys() == curve.stats.keys()
    for key, (mean, std) in curve.stats.items():
        assert abs(stats[key][0] - mean) <= 1e-12 and abs(stats[key][1] - std) <= 1e-12
    assert sig == curve.significance_line
    assert FusionCurve.from_json(js).stats == curve.stats


def test_sigline_constant_within_criterion(curve):
    _, text = emit_fusion_curve(curve)
    lines = [row.split(",") for row in text.splitlines()[1:]]
    for crit in ("RMSE", "PLCC", "SRCC"):
        values = {r[5] for r in lines if r[2] == crit}
        assert len(values) == 1
    assert {r[5] for r in lines if r[2] == "RMSE"} == {""}


def test_runs_one_curve_has_zero_std():
    db, table = make_synthetic_benchmark(n=40, seed=2)
    c = run_incremental_fusion_study(db, table, ExperimentConfig(runs=1, registry=table.metric_ids), ["S1"])
    _, text = emit_fusion_curve(c)
    assert all(float(r.split(",")[4]) == 0.0 for r in text.splitlines()[1:])


def test_summary_table_columns():
    db, table = make_synthetic_benchmark(n=60, seed=1)
    cfg = ExperimentConfig(runs=1, registry=table.metric_ids)
    rep = run_full_fusion_study([db], [table], cfg)
    t = summary_table(rep, "PLCC", cfg.registry)
    assert t.columns == ("Existing Best", "NN Best", "SVR Best", "NN Boost", "SVR Boost")
    assert t.sources[0][3] == "boost"
    assert performance_table(rep, "PLCC", "nn").columns == tuple(cfg.registry)
