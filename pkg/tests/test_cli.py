import json
import subprocess
import sys

import pytest

from iqaboost.cli import main
from iqaboost.dataset import load_manifest
from iqaboost.experiments import ExperimentConfig, run_single_method_study
from iqaboost.metrics import ScoreTable, score_record

from helpers import write_image_database, write_synthetic_study


@pytest.fixture(scope="module")
def image_db(tmp_path_factory):
    return write_image_database(tmp_path_factory.mktemp("img"))


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    return write_synthetic_study(tmp_path_factory.mktemp("syn"), runs=2, n=80)


def test_validate_exit_codes(image_db, tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"noise": 12, "blur": 12}))
    assert main(["validate", "--manifest", str(image_db), "--expected", str(good)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"noise": 11, "blur": 12}))
    assert main(["validate", "--manifest", str(image_db), "--expected", str(bad)]) == 1
    capsys.readouterr()
    assert main(["validate", "--manifest", str(image_db), "--preset", "LIVE", "--json"]) == 1
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] is False and out["expected"]["compression"] == 460


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["part1", "--config"],
    ["part1", "--config", "c.json", "--out", "r.json", "--bogus"],
    ["validate", "--manifest", "m.csv", "--preset", "NOPE"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_runtime_errors(tmp_path, capsys):
    assert main(["part1", "--config", str(tmp_path / "missing.json"), "--out", "x.json"]) == 3
    bad = tmp_path / "m.csv"
    bad.write_text("stimulus_id,reference_path,distorted_path,subjective_score,category,database_id\n"
                   "a,r.png,d.png,1,blurr,X\n")
    assert main(["validate", "--manifest", str(bad)]) == 3
    assert "row 2" in capsys.readouterr().err


def test_config_errors_are_usage_errors(study, tmp_path):
    cfg = json.loads(study.read_text())
    cfg["mystery"] = 1
    p = study.parent / "bad_config.json"
    p.write_text(json.dumps(cfg))
    assert main(["part1", "--config", str(p), "--out", str(tmp_path / "r.json")]) == 2


def test_part1_part2_byte_identical(study, tmp_path):
    for cmd in ("part1", "part2"):
        a, b = tmp_path / f"{cmd}_a.json", tmp_path / f"{cmd}_b.json"
        assert main([cmd, "--config", str(study), "--out", str(a)]) == 0
        assert main([cmd, "--config", str(study), "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


def test_part2_reuses_part1_orderings(study, tmp_path):
    p1 = tmp_path / "p1.json"
    assert main(["part1", "--config", str(study), "--out", str(p1)]) == 0
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["part2", "--config", str(study), "--out", str(a)]) == 0
    assert main(["part2", "--config", str(study), "--out", str(b), "--part1", str(p1),
                 "--csv-dir", str(tmp_path / "csv")]) == 0
    assert json.loads(a.read_text())["curves"] == json.loads(b.read_text())["curves"]
    assert sorted(p.name for p in (tmp_path / "csv").iterdir()) == [
        "curve_SYN_PLCC.csv", "curve_SYN_RMSE.csv", "curve_SYN_SRCC.csv"]


def test_fuse_and_report(study, tmp_path):
    rep, curves = tmp_path / "fuse.json", tmp_path / "curves.json"
    assert main(["fuse", "--config", str(study), "--out", str(rep)]) == 0
    assert main(["part2", "--config", str(study), "--out", str(curves)]) == 0
    out = tmp_path / "tables"
    assert main(["report", "--input", str(rep), "--curves", str(curves), "--out-dir", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"existing_rmse.txt", "nn_plcc.json", "summary_srcc.txt", "curve_SYN_PLCC.csv"} <= names
    assert "NN Boost" in (out / "summary_plcc.txt").read_text()
    assert main(["report", "--out-dir", str(out)]) == 2


def test_score_then_part1_equals_in_process(image_db, tmp_path):
    scores = tmp_path / "scores.csv"
    assert main(["score", "--manifest", str(image_db), "--out", str(scores)]) == 0
    registry = ["PSNR", "SSIM", "MS-SSIM"]
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"runs": 2, "registry": registry,
                                  "manifests": {"TOY": str(image_db)},
                                  "score_files": {"TOY": [str(scores)]}}))
    out = tmp_path / "r.json"
    assert main(["part1", "--config", str(config), "--out", str(out)]) == 0

    db = load_manifest(image_db)
    fragment = {}
    for rec in db.records:
        fragment.update(score_record(rec, registry, image_db))
    table = ScoreTable.from_fragment(fragment, db.stimulus_ids, registry)
    direct = run_single_method_study(db, table, ExperimentConfig(runs=2, registry=registry))
    assert json.loads(out.read_text())["entries"] == direct.to_json()["entries"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "iqaboost", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "iqaboost" in proc.stdout
