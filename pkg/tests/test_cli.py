import csv
import json

import pytest

from polarmp.cli import run
from polarmp.classify import write_predictions
from polarmp.dataset import LossLedger, ParticleRecord, read_manifest, write_manifest
from polarmp.pipeline import REPORT_COLUMNS

from test_classify import REFERENCE_COUNTS, counts_to_predictions


def ok(argv, capsys=None):
    status = run([str(a) for a in argv])
    assert status == 0, argv
    return status


def error_line(argv, capsys):
    status = run([str(a) for a in argv])
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return status, json.loads(err[0])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> demosaic -> stokes -> split -> folds -> train on a tiny dataset."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    ok(["synth", "--n", 8, "--seed", 1, "--out", data, "--size", 64, "--noise", 50])
    ok(["demosaic", "--in", data, "--out", root / "dem"])
    ok(["stokes", "--in", root / "dem", "--out", root / "stk"])
    ok(["split", "--manifest", root / "stk" / "manifest.csv", "--seed", 0])
    ok(["folds", "--manifest", root / "stk" / "manifest.csv", "--seed", 0, "--k", 2, "--out", root / "folds.json"])
    ok(["train", "--in", root / "stk", "--seed", 0, "--out", root / "model.json",
        "--folds", root / "folds.json", "--ledger", root / "ledger.json"])
    return root


def test_pipeline_outputs(pipeline):
    recs = read_manifest(pipeline / "stk" / "manifest.csv")
    assert len(recs) == 24
    assert {r.split for r in recs} == {"train", "val", "test"}
    for tag in ("s0", "aolp", "dolp", "valid"):
        assert (pipeline / "stk" / f"{recs[0].id}_{tag}.pgm").is_file()
    rm = json.loads((pipeline / "stk" / "run_manifest.json").read_text())
    assert rm["subcommand"] == "stokes" and rm["inputs"]
    model = json.loads((pipeline / "model.json").read_text())
    assert model["descriptor"] == "aolp" and len(model["loss_curve"]) >= 1
    assert (pipeline / "model.json.manifest.json").is_file()
    assert len(LossLedger.load(pipeline / "ledger.json")) > 0


def test_eval_with_model(pipeline, capsys):
    ok(["eval", "--truth", pipeline / "stk" / "manifest.csv", "--model", pipeline / "model.json",
        "--split", "test", "--out", pipeline / "eval.json", "--matrix", pipeline / "cm.csv"])
    assert "accuracy=" in capsys.readouterr().out
    rep = json.loads((pipeline / "eval.json").read_text())
    assert rep["n"] == sum(r.split == "test" for r in read_manifest(pipeline / "stk" / "manifest.csv"))


def test_degrade_and_report(pipeline):
    ok(["degrade", "--in", pipeline / "stk", "--out", pipeline / "deg", "--seed", 3])
    for name in ("Original", "StructureContour", "TextureJitter", "UniformShape", "FullNoise"):
        assert (pipeline / "deg" / name / "manifest.csv").is_file()
    ok(["report", "--model", pipeline / "model.json", "--in", pipeline / "stk", "--seed", 3,
        "--out", pipeline / "table.csv", "--reports-dir", pipeline / "reps"])
    with open(pipeline / "table.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert [r[0][:2] for r in rows[1:]] == ["1.", "2.", "3.", "4.", "5."]
    reps = sorted((pipeline / "reps").glob("*.json"))
    reps = [p for p in reps if not p.name.endswith(".manifest.json")]
    ok(["report", "--reports", *reversed(reps), "--out", pipeline / "table2.csv"])
    assert (pipeline / "table2.csv").read_text() == (pipeline / "table.csv").read_text()


def test_refine_from_ledger(pipeline):
    out = pipeline / "refined.csv"
    ok(["refine", "--ledger", pipeline / "ledger.json", "--manifest", pipeline / "stk" / "manifest.csv",
        "--top-frac", 0.25, "--out", out])
    before = read_manifest(pipeline / "stk" / "manifest.csv")
    after = read_manifest(out)
    assert [r.id for r in before if r.split == "test"] == [r.id for r in after if r.split == "test"]
    assert sum(r.split == "removed" for r in after) > 0


def test_rerun_is_bit_identical_and_jobs_invariant(tmp_path):
    for name, jobs in (("a", 1), ("b", 1), ("c", 3)):
        d = tmp_path / name
        ok(["synth", "--n", 2, "--seed", 4, "--out", d / "data", "--size", 32, "--noise", 30, "--jobs", jobs])
        ok(["stokes", "--in", d / "data", "--out", d / "stk", "--jobs", jobs])
    for f in sorted((tmp_path / "a" / "stk").iterdir()):
        if f.name == "run_manifest.json":
            continue
        for other in ("b", "c"):
            assert f.read_bytes() == (tmp_path / other / "stk" / f.name).read_bytes(), f.name


def test_eval_reference_predictions(tmp_path, capsys):
    preds, truth = counts_to_predictions(REFERENCE_COUNTS)
    write_predictions(tmp_path / "p.csv", preds)
    write_manifest(tmp_path / "m.csv", [ParticleRecord(i, lab, split="test") for i, lab in truth.items()])
    ok(["eval", "--truth", tmp_path / "m.csv", "--pred", tmp_path / "p.csv", "--out", tmp_path / "r.json"])
    assert "accuracy=0.8000" in capsys.readouterr().out
    assert json.loads((tmp_path / "r.json").read_text())["accuracy"] == pytest.approx(0.8)


def test_refine_outlier_fixture(tmp_path, capsys):
    split = {}
    recs = []
    for i in range(600):
        rid = f"id{i:04d}"
        s = "test" if i >= 510 else ("val" if i % 6 == 0 else "train")
        recs.append(ParticleRecord(rid, ("PP", "HDPE", "LDPE")[i % 3], split=s))
        split[rid] = s
    led = LossLedger()
    pool = [r.id for r in recs if r.split != "test"]
    for j, rid in enumerate(pool[:500]):
        led.record(rid, j % 5, 0, 5.0 if j < 30 else 0.4)
    write_manifest(tmp_path / "m.csv", recs)
    led.save(tmp_path / "l.json")
    ok(["refine", "--ledger", tmp_path / "l.json", "--manifest", tmp_path / "m.csv", "--policy", "mean",
        "--report", tmp_path / "rep.json"])
    after = read_manifest(tmp_path / "m.csv")
    assert sum(r.split == "removed" for r in after) == 30
    assert all(r.split == "test" for r in after if split[r.id] == "test")
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["removed_count"] == 30 and rep["active_count"] == 570


def test_errors_are_one_json_line(tmp_path, capsys):
    status, err = error_line(["stokes", "--in", tmp_path / "nowhere"], capsys)
    assert status == 1 and err["key"] == "--in" and err["command"] == "stokes"
    status, err = error_line(["synth", "--n", 1, "--out", tmp_path / "x"], capsys)
    assert status == 2 and err["key"] == "--seed"
    status, err = error_line(["split", "--manifest", "m.csv", "--seed", 0, "--bogus"], capsys)
    assert status == 2 and err["key"] == "--bogus"


def test_config_errors_name_the_key(tmp_path, capsys, monkeypatch):
    bad = tmp_path / "bad.ini"
    bad.write_text("[segment]\ncanny_lo = 3\n")
    status, err = error_line(["--config", bad, "synth", "--n", 1, "--seed", 0, "--out", tmp_path / "o"], capsys)
    assert status == 2 and err["key"] == "segment.canny_lo"
    inverted = tmp_path / "inv.ini"
    inverted.write_text("[segment]\ncanny_low = 200\ncanny_high = 100\n")
    ok(["synth", "--n", 1, "--seed", 0, "--out", tmp_path / "d", "--size", 32])
    monkeypatch.setenv("POLARMP_CONFIG", str(inverted))
    status, err = error_line(["segment", "--in", tmp_path / "d", "--source", "image"], capsys)
    assert status == 2 and err["key"].startswith("segment.canny_")


def test_env_config_changes_run_manifest(tmp_path, monkeypatch):
    ini = tmp_path / "c.ini"
    ini.write_text("[stokes]\nrequire_s1 = false\n")
    ok(["synth", "--n", 1, "--seed", 0, "--out", tmp_path / "d", "--size", 32])
    monkeypatch.setenv("POLARMP_CONFIG", str(ini))
    ok(["stokes", "--in", tmp_path / "d", "--out", tmp_path / "s"])
    rm = json.loads((tmp_path / "s" / "run_manifest.json").read_text())
    assert rm["config"]["stokes"]["require_s1"] is False
    assert rm["config_source"] == str(ini)
