import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from drow.cli import SWEEP_RADII, main
from drow.dataio import load_directory
from drow.nn.model import load_checkpoint


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["synth", "--out", str(d), "--num-scans", "10", "--scans-per-scene", "5",
                 "--seed", "4"]) == 0
    return d


@pytest.fixture(scope="module")
def checkpoint(data, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "model.npz"
    assert main(["train", "--data", str(data), "--out", str(path), "--epochs", "1",
                 "--batches-per-epoch", "2", "--batch-size", "64", "--valid-fraction", "0.2"]) == 0
    return path


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_synth_writes_loadable_dataset(data):
    frames = load_directory(data)
    assert len(frames) == 10
    assert any(f.annotations for f in frames)


def test_train_smoke(checkpoint):
    model, meta = load_checkpoint(checkpoint)
    assert model.input_length == 48
    assert all(math.isfinite(v) for v in meta["history"]["train_loss"])
    assert meta["sensor"]["num_beams"] == 450
    sidecar = json.loads(checkpoint.with_suffix(".json").read_text())
    assert sidecar == {k: v for k, v in meta.items() if k in sidecar}
    assert {"sensor", "preprocess", "vote", "train", "history"} <= set(sidecar)


def test_train_is_deterministic(data, checkpoint, tmp_path, capsys):
    again = tmp_path / "again.npz"
    code, _, _ = run(capsys, "train", "--data", data, "--out", again, "--epochs", "1",
                     "--batches-per-epoch", "2", "--batch-size", "64", "--valid-fraction", "0.2")
    assert code == 0
    assert again.read_bytes() == checkpoint.read_bytes()


def test_detect_is_deterministic(data, checkpoint, tmp_path, capsys):
    scans = sorted(data.glob("*.csv"))[0]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run(capsys, "detect", "--checkpoint", checkpoint, "--scans", scans, "--out", out,
                   "--threshold", "0.3")[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "seq,x,y,class,score"


def test_eval_oracle_gives_all_ones(data, tmp_path, capsys):
    out = tmp_path / "eval"
    code, stdout, _ = run(capsys, "eval", "--oracle", "--data", data, "--out", out)
    assert code == 0
    report = json.loads(stdout)
    assert report["agnostic"]["best_f1"] == 1.0
    for name in ("agnostic", "wheelchair", "walker"):
        rows = _read_csv(out / f"pr_{name}.csv")
        assert len(rows) == 101
        assert all(float(r["precision"]) == 1.0 and float(r["recall"]) == 1.0 for r in rows)
    radius_files = sorted(p.name for p in out.glob("pr_agnostic_r*.csv"))
    assert radius_files == [f"pr_agnostic_r{r:.1f}.csv" for r in SWEEP_RADII]
    dist = _read_csv(out / "pr_distance.csv")
    assert 0 < len(dist) <= 60  # cutoffs with no annotation inside are skipped
    assert all(float(r["precision"]) == 1.0 and float(r["recall"]) == 1.0 for r in dist)


def test_eval_with_checkpoint(data, checkpoint, tmp_path, capsys):
    code, stdout, _ = run(capsys, "eval", "--checkpoint", checkpoint, "--data", data,
                          "--out", tmp_path, "--thresholds", "0.2", "0.6")
    assert code == 0
    rows = _read_csv(tmp_path / "pr_walker.csv")
    assert [float(r["threshold"]) for r in rows] == [0.2, 0.6]
    assert all(0 <= float(r["precision"]) <= 1 for r in rows)


def test_tune_writes_log_and_updates_checkpoint(data, checkpoint, tmp_path, capsys):
    ckpt = tmp_path / "m.npz"
    ckpt.write_bytes(checkpoint.read_bytes())
    log = tmp_path / "trials.ndjson"
    code, stdout, _ = run(capsys, "tune", "--checkpoint", ckpt, "--data", data, "--budget", "3",
                          "--log", log, "--thresholds", "0.5", "0.9", "--update-checkpoint")
    assert code == 0
    best = json.loads(stdout)
    assert len(log.read_text().splitlines()) == 3
    assert load_checkpoint(ckpt)[1]["vote"] == best["config"]


def test_bench_smoke(checkpoint, capsys):
    code, stdout, _ = run(capsys, "bench", "--checkpoint", checkpoint, "--num-scans", "5")
    assert code == 0
    report = json.loads(stdout)
    assert report["scans"] == 5 and report["scans_per_second"] > 0
    assert set(report["ms_per_scan"]) == {"preprocess", "network", "voting", "nms"}


def test_config_file_supplies_defaults(data, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"oracle": True, "data": str(data), "thresholds": [0.5]}))
    code, stdout, _ = run(capsys, "--config", cfg, "eval", "--out", tmp_path / "e")
    assert code == 0
    assert len(_read_csv(tmp_path / "e" / "pr_agnostic.csv")) == 1


def test_missing_data_is_one_json_line(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--oracle", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)])
    assert exc.value.code == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and set(json.loads(err[0])) == {"error", "message"}


def test_usage_error_is_json(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["detect"])
    assert exc.value.code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UsageError"


def test_beam_count_mismatch(checkpoint, tmp_path, capsys):
    scans = tmp_path / "short.csv"
    scans.write_text("0,0.0," + ",".join(["3.0"] * 449) + "\n")
    with pytest.raises(SystemExit) as exc:
        main(["detect", "--checkpoint", str(checkpoint), "--scans", str(scans)])
    assert exc.value.code == 1
    assert "450" in json.loads(capsys.readouterr().err)["message"]


def test_module_entry_point(data, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "drow", "eval", "--oracle", "--data", str(data),
                           "--out", str(tmp_path), "--thresholds", "0.5"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["agnostic"]["best_f1"] == 1.0
