"""End-to-end command line runs against a miniature dataset.

The fixture pipeline simulates 15 short trials (3 classes, 8 packets/s),
preprocesses them to 40-packet feature files, trains a 2-fold stack of
64x-scaled models for 2 epochs, and classifies the held-out test trials.
Individual tests assert on the artifacts each stage leaves behind.
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from csisense import cli
from csisense.dataio import (
    load_manifest,
    load_split,
    read_predictions,
    read_trial,
    write_trial,
)

MICRO_PROFILES = """\
[meta]
version = 1
packet_rate = 8.0
jitter = 0.08
csi_noise = 0.01

[steady-state]
duration = 3.0
steady_duration = 2.0
steady_position = begin
shape = flat

[approaching]
duration = 3.5
steady_duration = 2.0
steady_position = end
shape = ramp
depth_los = 0.9
depth_scatter = 0.35
phase_drift = -28.0

[pushing]
duration = 4.0
steady_duration = 2.0
steady_position = begin
shape = bump
depth_los = 0.65
depth_scatter = 0.55
phase_drift = 9.0
center = 0.5
width = 0.16
"""

MICRO_ARCH = """\
[arch]
version = 1
seq_len = 40
scale_factor = 64
"""

MICRO_TRAIN = """\
[train]
version = 1
epochs = 2
batch = 4
lr = 0.003
folds = 2
seed = 0
"""


def _class_of(trial_id: str) -> str:
    return trial_id.removeprefix("pair00-")[:-3]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    profiles = root / "profiles.ini"
    arch = root / "arch.ini"
    traincfg = root / "train.ini"
    profiles.write_text(MICRO_PROFILES)
    arch.write_text(MICRO_ARCH)
    traincfg.write_text(MICRO_TRAIN)

    dataset = root / "dataset"
    features = root / "features"
    models = root / "models"
    predictions = root / "predictions"

    assert cli.main([
        "simulate", "--profiles", str(profiles), "--pairs", "1",
        "--trials-per-class", "5", "--seed", "3", "--out", str(dataset),
    ]) == 0
    assert cli.main([
        "preprocess", "--manifest", str(dataset / "manifest.json"),
        "--target-len", "40", "--out", str(features),
    ]) == 0
    assert cli.main([
        "train", "--features", str(features), "--arch", str(arch),
        "--train-cfg", str(traincfg), "--out", str(models),
    ]) == 0

    split = load_split(features / "splits.json")
    test_dir = root / "test-trials"
    test_dir.mkdir()
    for tid in split.test:
        src = dataset / "trials" / f"{tid}.trial"
        (test_dir / src.name).write_bytes(src.read_bytes())

    assert cli.main([
        "classify", "--weights", str(models), "--input", str(test_dir),
        "--out", str(predictions),
    ]) == 0

    return {
        "root": root,
        "profiles": profiles,
        "arch": arch,
        "traincfg": traincfg,
        "dataset": dataset,
        "features": features,
        "models": models,
        "test_dir": test_dir,
        "predictions": predictions,
        "split": split,
    }


# ---------------------------------------------------------------- simulate

def test_simulate_outputs(pipeline):
    dataset = pipeline["dataset"]
    trials = sorted((dataset / "trials").glob("*.trial"))
    assert len(trials) == 15
    manifest = load_manifest(dataset / "manifest.json")
    assert len(manifest.entries) == 15
    by_class = {}
    for e in manifest.entries:
        by_class.setdefault(e.class_name, []).append(e)
    assert {k: len(v) for k, v in by_class.items()} == {
        "steady-state": 5, "approaching": 5, "pushing": 5,
    }
    # 8 packets/s: 16 steady + duration * 8 active
    assert all(e.length == 40 for e in by_class["steady-state"])
    assert all(e.length == 44 for e in by_class["approaching"])
    assert all(e.length == 48 for e in by_class["pushing"])


def test_simulate_rerun_is_byte_identical(pipeline, tmp_path):
    again = tmp_path / "again"
    assert cli.main([
        "simulate", "--profiles", str(pipeline["profiles"]), "--pairs", "1",
        "--trials-per-class", "5", "--seed", "3", "--out", str(again),
    ]) == 0
    first = pipeline["dataset"]
    assert (again / "manifest.json").read_bytes() == (first / "manifest.json").read_bytes()
    for path in sorted((first / "trials").glob("*.trial")):
        assert (again / "trials" / path.name).read_bytes() == path.read_bytes()


def test_simulate_parallel_matches_serial(pipeline, tmp_path):
    par = tmp_path / "par"
    assert cli.main([
        "simulate", "--profiles", str(pipeline["profiles"]), "--pairs", "1",
        "--trials-per-class", "5", "--seed", "3", "--out", str(par),
        "--jobs", "2",
    ]) == 0
    first = pipeline["dataset"]
    assert (par / "manifest.json").read_bytes() == (first / "manifest.json").read_bytes()
    for path in sorted((first / "trials").glob("*.trial")):
        assert (par / "trials" / path.name).read_bytes() == path.read_bytes()


def test_simulate_missing_profile_file(tmp_path, capsys):
    rc = cli.main([
        "simulate", "--profiles", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "d"),
    ])
    assert rc == 2
    assert "profile file not found" in capsys.readouterr().err


def test_simulate_rejects_bad_counts(pipeline, tmp_path, capsys):
    rc = cli.main([
        "simulate", "--profiles", str(pipeline["profiles"]), "--pairs", "0",
        "--out", str(tmp_path / "d"),
    ])
    assert rc == 2
    assert "--pairs" in capsys.readouterr().err


# -------------------------------------------------------------- preprocess

def test_preprocess_outputs(pipeline):
    features = pipeline["features"]
    assert len(list(features.glob("pair00-*.csv"))) == 15
    assert (features / "scaler.json").exists()
    split = pipeline["split"]
    assert (len(split.train), len(split.val), len(split.test)) == (9, 3, 3)
    for part in (split.train, split.val, split.test):
        names = sorted(_class_of(tid) for tid in part)
        assert len(set(names)) == 3  # stratified: every class in every part


def test_preprocess_rerun_is_byte_identical(pipeline, tmp_path):
    again = tmp_path / "features2"
    assert cli.main([
        "preprocess", "--manifest", str(pipeline["dataset"] / "manifest.json"),
        "--target-len", "40", "--out", str(again),
    ]) == 0
    first = pipeline["features"]
    for path in sorted(first.iterdir()):
        assert (again / path.name).read_bytes() == path.read_bytes()


def test_preprocess_missing_manifest(tmp_path, capsys):
    rc = cli.main([
        "preprocess", "--manifest", str(tmp_path / "manifest.json"), "--out", str(tmp_path / "f"),
    ])
    assert rc == 2
    assert "manifest not found" in capsys.readouterr().err


def test_preprocess_reports_unreadable_trials(pipeline, tmp_path, capsys):
    clone = tmp_path / "dataset"
    (clone / "trials").mkdir(parents=True)
    src = pipeline["dataset"]
    (clone / "manifest.json").write_bytes((src / "manifest.json").read_bytes())
    for path in (src / "trials").glob("*.trial"):
        (clone / "trials" / path.name).write_bytes(path.read_bytes())
    victim = clone / "trials" / "pair00-pushing-02.trial"
    raw = bytearray(victim.read_bytes())
    raw[100] ^= 0xFF
    victim.write_bytes(bytes(raw))

    rc = cli.main([
        "preprocess", "--manifest", str(clone / "manifest.json"),
        "--target-len", "40", "--out", str(tmp_path / "f"),
    ])
    assert rc == 2
    err = capsys.readouterr().err
    assert "could not read 1 trial file(s)" in err
    assert "pair00-pushing-02.trial" in err


# ------------------------------------------------------------------- train

def test_train_outputs(pipeline):
    models = pipeline["models"]
    assert sorted(p.name for p in models.glob("*.weights")) == ["fold0.weights", "fold1.weights"]
    for k in range(2):
        lines = (models / f"fold{k}_history.csv").read_text().splitlines()
        assert lines[0] == "epoch,loss,acc,precision,recall,lr"
        assert len(lines) >= 2
    folds = load_split(models / "folds.json").folds
    assert len(folds) == 2
    assert sorted(len(f) for f in folds) == [6, 6]
    assert sorted(tid for f in folds for tid in f) == sorted(
        pipeline["split"].train + pipeline["split"].val
    )


def test_train_missing_arch_file(pipeline, tmp_path, capsys):
    rc = cli.main([
        "train", "--features", str(pipeline["features"]),
        "--arch", str(tmp_path / "nope.ini"), "--train-cfg", str(pipeline["traincfg"]),
        "--out", str(tmp_path / "m"),
    ])
    assert rc == 2
    assert "config file not found" in capsys.readouterr().err


def test_train_missing_features(pipeline, tmp_path, capsys):
    rc = cli.main([
        "train", "--features", str(tmp_path / "empty"), "--arch", str(pipeline["arch"]),
        "--train-cfg", str(pipeline["traincfg"]), "--out", str(tmp_path / "m"),
    ])
    assert rc == 2
    assert "no preprocessed features" in capsys.readouterr().err


def test_train_divergence_exits_1(pipeline, tmp_path, capsys):
    bad = tmp_path / "explode.ini"
    bad.write_text("[train]\nepochs = 1\nbatch = 4\nlr = 1e200\nfolds = 2\nseed = 0\n")
    with np.errstate(over="ignore", invalid="ignore"):
        rc = cli.main([
            "train", "--features", str(pipeline["features"]), "--arch", str(pipeline["arch"]),
            "--train-cfg", str(bad), "--out", str(tmp_path / "m"),
        ])
    assert rc == 1
    assert "fold 0" in capsys.readouterr().err


# ---------------------------------------------------------------- classify

def test_classify_outputs(pipeline):
    predictions = pipeline["predictions"]
    files = sorted(predictions.glob("*.csv"))
    assert [f.stem for f in files] == sorted(pipeline["split"].test)
    for f in files:
        trace = read_predictions(f)
        assert trace.per_fold.shape == (2, 40)
        assert trace.ensembled.shape == (40,)
        assert trace.true_labels is not None
        assert trace.true_labels.shape == (40,)


def test_classify_single_file(pipeline, tmp_path):
    tid = pipeline["split"].test[0]
    trial_path = pipeline["test_dir"] / f"{tid}.trial"
    out = tmp_path / "one"
    assert cli.main([
        "classify", "--weights", str(pipeline["models"]),
        "--input", str(trial_path), "--out", str(out),
    ]) == 0
    assert [p.name for p in out.iterdir()] == [f"{tid}.csv"]


def test_classify_without_models(pipeline, tmp_path, capsys):
    empty = tmp_path / "models"
    empty.mkdir()
    rc = cli.main([
        "classify", "--weights", str(empty),
        "--input", str(pipeline["test_dir"]), "--out", str(tmp_path / "p"),
    ])
    assert rc == 2
    assert "no trained models found" in capsys.readouterr().err


def test_classify_missing_input(pipeline, tmp_path, capsys):
    rc = cli.main([
        "classify", "--weights", str(pipeline["models"]),
        "--input", str(tmp_path / "ghost.trial"), "--out", str(tmp_path / "p"),
    ])
    assert rc == 2
    assert "input not found" in capsys.readouterr().err


def test_classify_unlabeled_trial(pipeline, tmp_path):
    tid = pipeline["split"].test[0]
    trial = read_trial(pipeline["test_dir"] / f"{tid}.trial")
    blind_dir = tmp_path / "blind"
    blind_dir.mkdir()
    write_trial(trial, blind_dir / "anon.trial", labeled=False)
    out = tmp_path / "p"
    assert cli.main([
        "classify", "--weights", str(pipeline["models"]),
        "--input", str(blind_dir), "--out", str(out),
    ]) == 0
    trace = read_predictions(out / "anon.csv")
    assert trace.true_labels is None
    assert trace.smoothed.shape == (40,)


def test_classify_parallel_matches_serial(pipeline, tmp_path):
    par = tmp_path / "par"
    assert cli.main([
        "classify", "--weights", str(pipeline["models"]),
        "--input", str(pipeline["test_dir"]), "--out", str(par), "--jobs", "2",
    ]) == 0
    for path in sorted(pipeline["predictions"].glob("*.csv")):
        assert (par / path.name).read_bytes() == path.read_bytes()


# ---------------------------------------------------------------- evaluate

def test_evaluate_outputs(pipeline, tmp_path, capsys):
    out = tmp_path / "report"
    rc = cli.main(["evaluate", "--predictions", str(pipeline["predictions"]), "--out", str(out)])
    assert rc == 0
    captured = capsys.readouterr()
    assert "accuracy:" in captured.out
    for name in ("metrics.csv", "metrics.txt", "confusion.csv"):
        assert (out / name).exists()
    assert (out / "metrics.csv").read_text().startswith("class,support,precision")


def test_evaluate_json(pipeline, tmp_path, capsys):
    rc = cli.main([
        "evaluate", "--predictions", str(pipeline["predictions"]),
        "--out", str(tmp_path / "r"), "--json",
    ])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert set(payload) >= {"accuracy", "precision", "recall", "f1", "confusion", "trials"}
    assert payload["trials"] == 3
    assert 0.0 <= payload["accuracy"] <= 1.0
    assert len(payload["confusion"]) == 13


def test_evaluate_rejects_unlabeled(pipeline, tmp_path, capsys):
    tid = pipeline["split"].test[0]
    trial = read_trial(pipeline["test_dir"] / f"{tid}.trial")
    blind_dir = tmp_path / "blind"
    blind_dir.mkdir()
    write_trial(trial, blind_dir / "anon.trial", labeled=False)
    pred = tmp_path / "pred"
    assert cli.main([
        "classify", "--weights", str(pipeline["models"]),
        "--input", str(blind_dir), "--out", str(pred),
    ]) == 0
    rc = cli.main(["evaluate", "--predictions", str(pred), "--out", str(tmp_path / "r")])
    assert rc == 2
    assert "no true labels" in capsys.readouterr().err


def test_evaluate_empty_dir(tmp_path, capsys):
    (tmp_path / "p").mkdir()
    rc = cli.main(["evaluate", "--predictions", str(tmp_path / "p"), "--out", str(tmp_path / "r")])
    assert rc == 2
    assert "no prediction files" in capsys.readouterr().err


# ------------------------------------------------------------------ report

def test_report_outputs(pipeline, tmp_path):
    out = tmp_path / "plots"
    rc = cli.main(["report", "--predictions", str(pipeline["predictions"]), "--out", str(out)])
    assert rc == 0
    for tid in pipeline["split"].test:
        svg = (out / f"{tid}.svg").read_text()
        assert svg.startswith("<svg")
        assert "true" in svg and "smoothed" in svg
        lines = (out / f"{tid}.csv").read_text().splitlines()
        assert lines[0] == "packet_index,true,ensembled,smoothed"
        assert len(lines) == 41


# ------------------------------------------------------------- environment

def test_jobs_env_variable(pipeline, tmp_path, monkeypatch):
    monkeypatch.setenv("CSISENSE_JOBS", "2")
    env_dir = tmp_path / "envjobs"
    assert cli.main([
        "simulate", "--profiles", str(pipeline["profiles"]), "--pairs", "1",
        "--trials-per-class", "5", "--seed", "3", "--out", str(env_dir),
    ]) == 0
    first = pipeline["dataset"]
    assert (env_dir / "manifest.json").read_bytes() == (first / "manifest.json").read_bytes()


def test_jobs_env_rejects_garbage(pipeline, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CSISENSE_JOBS", "many")
    rc = cli.main([
        "simulate", "--profiles", str(pipeline["profiles"]), "--out", str(tmp_path / "d"),
    ])
    assert rc == 2
    assert "CSISENSE_JOBS" in capsys.readouterr().err


def test_jobs_flag_rejects_zero(pipeline, tmp_path, capsys):
    rc = cli.main([
        "simulate", "--profiles", str(pipeline["profiles"]), "--out", str(tmp_path / "d"),
        "--jobs", "0",
    ])
    assert rc == 2
    assert "--jobs" in capsys.readouterr().err


def test_verbose_zero_silences_progress(pipeline, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CSISENSE_VERBOSE", "0")
    rc = cli.main(["report", "--predictions", str(pipeline["predictions"]), "--out", str(tmp_path / "plots")])
    assert rc == 0
    assert capsys.readouterr().err == ""


def test_console_script_help():
    result = subprocess.run(
        ["csisense", "--help"], capture_output=True, text=True, timeout=60
    )
    assert result.returncode == 0
    for name in ("simulate", "preprocess", "train", "classify", "evaluate", "report"):
        assert name in result.stdout
