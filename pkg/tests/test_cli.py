import csv
import json

import pytest

from carefulkin.cli import main
from carefulkin.config import PipelineConfig, golden_defaults, lookup


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    """Small synthetic cohort with subject 2 slowed down, preprocessed for both sources."""
    out = tmp_path_factory.mktemp("cohort")
    cfg = out / "config.json"
    cfg.write_text(json.dumps({"synth": {"outlier_subjects": [2], "outlier_shift": 0.8}, "train": {"max_epochs": 1}}))
    assert run("synth", "--config", cfg, "--out", out, "--subjects", 4, "--trials", 16, "--seed", 5) == 0
    assert run("preprocess", "--config", cfg, "--out", out, "--exclude-outliers", "none", "--seed", 5) == 0
    assert run("preprocess", "--config", cfg, "--out", out, "--source", "flow", "--exclude-outliers", "none", "--seed", 5) == 0
    return out, cfg


def test_synth_counts_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("synth", "--subjects", 3, "--trials", 8, "--seed", 7, "--out", a) == 0
    assert run("synth", "--subjects", 3, "--trials", 8, "--seed", 7, "--out", b) == 0
    manifest = json.loads((a / "manifest.json").read_text())
    assert len(manifest) == 24
    assert len(list((a / "trials").glob("s??_t???.csv"))) == 24
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    assert (a / "trials" / "s02_t005.csv").read_bytes() == (b / "trials" / "s02_t005.csv").read_bytes()


def test_synth_rejects_empty_cohort(tmp_path, capsys):
    assert run("synth", "--subjects", 0, "--out", tmp_path) == 2
    assert "error" in capsys.readouterr().err


def test_preprocess_outputs(cohort):
    out, _ = cohort
    summary = json.loads((out / "preprocess_mocap.json").read_text())
    assert summary["n_trials"] == 64 and summary["exclusion_rate"] < 0.02
    assert summary["datasets"]["resampled32"]["shape"] == [summary["n_balanced"], 32, 4]
    assert summary["datasets"]["padded132"]["shape"] == [summary["n_balanced"], 132, 4]
    with open(out / "segmentation_mocap.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 64 and rows[0]["status"] == "ok"
    header = (out / "features" / "mocap" / "s01_t000.csv").read_text().splitlines()[0]
    assert header == "frame,V,C,R,A"
    assert (out / "datasets" / "flow_padded132.ckd").exists()
    # flow features carry the dt-augmented speed floor
    first = (out / "features" / "flow" / "s01_t000.csv").read_text().splitlines()[1].split(",")
    assert float(first[1]) >= 1 / 22 - 1e-9


def test_preprocess_isolates_corrupt_trial(tmp_path):
    out = tmp_path / "c"
    assert run("synth", "--subjects", 2, "--trials", 4, "--out", out) == 0
    (out / "trials" / "s01_t002.csv").write_text("t,marker_id,x,y,z,valid\n0.0,IndexMCP,1,2,oops,1\n")
    assert run("preprocess", "--out", out, "--exclude-outliers", "none") == 0
    with open(out / "segmentation_mocap.csv") as f:
        rows = {r["trial_id"]: r for r in csv.DictReader(f)}
    assert rows["s01_t002"]["status"] == "failed" and "ParseError" in rows["s01_t002"]["message"]
    assert sum(r["status"] == "ok" for r in rows.values()) == 7


def test_preprocess_missing_manifest(tmp_path):
    assert run("preprocess", "--out", tmp_path) == 2


def test_train_eval_and_report(cohort, capsys):
    out, cfg = cohort
    assert run("train-eval", "--config", cfg, "--out", out, "--task", "carefulness") == 0
    assert run("train-eval", "--config", cfg, "--out", out, "--task", "weight") == 0
    assert run("train-eval", "--config", cfg, "--out", out, "--task", "weight", "--subset", "scale-to-shelf") == 0
    report = json.loads((out / "reports" / "carefulness_mocap_cnn-lstm-dnn_resampled32.json").read_text())
    assert len(report["folds"]) == 4
    assert {f["held_out_subject"] for f in report["folds"]} == {1, 2, 3, 4}
    assert len(list((out / "checkpoints" / "carefulness_mocap_cnn-lstm-dnn_resampled32").glob("*.npz"))) == 4
    sub = json.loads((out / "reports" / "weight_mocap_cnn-lstm-dnn_resampled32_scale-to-shelf.json").read_text())
    assert sub["meta"]["subset"] == "scale-to-shelf" and sub["task"] == "weight"

    capsys.readouterr()
    assert run("report", "--out", out) == 0
    text = capsys.readouterr().out
    grid = text.split("\n\n")[1].splitlines()
    assert grid[0].split() == ["cnn-lstm-dnn", "mocap", "flow"]
    assert grid[1].startswith("carefulness") and grid[2].startswith("weight")
    assert "Kruskal-Wallis" in text
    flagged_rows = [line for line in text.splitlines() if line.strip().startswith("2 ") and line.rstrip().endswith("*")]
    assert flagged_rows

    assert run("report", "--out", out, "--format", "csv") == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert {r["task"] for r in rows} == {"carefulness", "weight"}
    assert (out / "durations.csv").read_text().startswith("source,subject,median")


def test_train_eval_missing_dataset(tmp_path, capsys):
    assert run("train-eval", "--out", tmp_path) == 2
    assert "dataset not found" in capsys.readouterr().err


def test_subset_needs_weight_task(cohort):
    out, cfg = cohort
    assert run("train-eval", "--config", cfg, "--out", out, "--subset", "low-care") == 2


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("synth", "--config", bad, "--out", tmp_path) == 2
    bad.write_text(json.dumps({"model": {"filters": 3}}))
    assert run("synth", "--config", bad, "--out", tmp_path) == 2
    assert run("synth", "--config", tmp_path / "missing.json", "--out", tmp_path) == 2
    assert run("train-eval", "--arch", "cnn-lstm-dnn", "--layout", "padded132", "--out", tmp_path) == 2
    with pytest.raises(SystemExit) as err:
        run("synth", "--source", "radar")
    assert err.value.code == 2


def test_golden_defaults():
    cfg = PipelineConfig()
    for path, expected in golden_defaults().items():
        assert lookup(cfg, path) == pytest.approx(expected), path
    assert cfg.layout == "resampled32"
    spec = cfg.model_spec()
    assert (spec.lstm_units, spec.dense_units, spec.dropout_rate) == (100, 100, 0.5)


def test_config_round_trip(tmp_path):
    cfg = PipelineConfig.from_dict({"seed": 3, "model": {"architecture": "masked-lstm-dnn"}, "synth": {"careful_duration": [2.1, 0.2]}})
    assert cfg.layout == "padded132" and cfg.synth.careful_duration == (2.1, 0.2)
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    again = PipelineConfig.load(path)
    assert again == cfg and again.to_json() == cfg.to_json()
    assert again.train_config().seed == 3 and again.synth_config().seed == 3
