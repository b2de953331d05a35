import json

import numpy as np
import pytest

from lexicol.cli import main
from lexicol.datasets import save_dataset
from lexicol.diffusion import load_profiles
from lexicol.partition import load_partition

from _synth import random_labeled_dataset


@pytest.fixture()
def dataset_dir(tmp_path):
    path = tmp_path / "ds"
    ds = random_labeled_dataset(n=50, num_classes=3, d=5, seed=41,
                                extra_edges=30, labels_per_class=3)
    ds = ds.with_split(ds.train_ids, [], np.asarray([40, 41, 42, 43]))
    save_dataset(ds, path)
    return path


def test_validate_ok(dataset_dir, capsys):
    assert main(["validate", str(dataset_dir)]) == 0
    out = capsys.readouterr().out
    assert "n=50" in out and "classes=3" in out


def test_validate_reports_error_with_exit_1(dataset_dir, capsys):
    (dataset_dir / "edges.tsv").write_text("5\t5\n")
    assert main(["validate", str(dataset_dir)]) == 1
    assert "self-loop" in capsys.readouterr().err


def test_bad_usage_exits_1(dataset_dir, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["partition", str(dataset_dir)])  # missing --k/--out
    assert exc.value.code == 1


def test_partition_subcommand(dataset_dir, tmp_path, capsys):
    out = tmp_path / "partition.tsv"
    assert main(["partition", str(dataset_dir), "--k", "4",
                 "--out", str(out)]) == 0
    part = load_partition(out)
    assert part.num_clusters == 4
    assert part.assignment.size == 50


def test_profiles_subcommand(dataset_dir, tmp_path):
    out = tmp_path / "profiles.bin"
    assert main(["profiles", str(dataset_dir), "--k", "3", "--alpha", "0.01",
                 "--m", "150", "--out", str(out)]) == 0
    profiles = load_profiles(out)
    assert profiles.values.shape == (3, 50)
    assert profiles.provenance["alpha"] == 0.01
    assert profiles.provenance["krylov_dim"] == 150


def test_expand_subcommand_writes_json(dataset_dir, tmp_path, capsys):
    out = tmp_path / "expansion.json"
    assert main(["expand", str(dataset_dir), "--method", "tp", "--t", "4",
                 "--eta", "0.5", "--k", "3", "--alpha", "0.01",
                 "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["method"] == "tp"
    assert payload["params"]["t"] == 4
    assert payload["degree_stats"]["count"] > 0
    added = [a["node"] for picks in payload["classes"].values() for a in picks]
    assert len(added) == len(set(added))


def test_expand_reuses_saved_profiles(dataset_dir, tmp_path):
    prof = tmp_path / "profiles.bin"
    assert main(["profiles", str(dataset_dir), "--k", "3", "--alpha", "0.01",
                 "--m", "150", "--out", str(prof)]) == 0
    out = tmp_path / "expansion.json"
    assert main(["expand", str(dataset_dir), "--method", "lexicol", "--t", "4",
                 "--profiles", str(prof), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["method"] == "lexicol"


def test_expand_cotrain_needs_no_profiles(dataset_dir, tmp_path):
    out = tmp_path / "expansion.json"
    assert main(["expand", str(dataset_dir), "--method", "cotrain", "--t", "3",
                 "--alpha", "0.01", "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    for picks in payload["classes"].values():
        for a in picks:
            assert a["similarity"] is None


def test_train_subcommand(dataset_dir, tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("hidden_units = 4\nmax_epochs = 10\ndropout_rate = 0.0\n"
                   "seed = 3\n")
    out = tmp_path / "model.bin"
    assert main(["train", str(dataset_dir), "--config", str(cfg),
                 "--out", str(out)]) == 0
    assert out.read_bytes()[:4] == b"LXGM"
    assert "test acc" in capsys.readouterr().out


def test_train_rejects_unknown_config_key(dataset_dir, tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("bogus = 1\n")
    assert main(["train", str(dataset_dir), "--config", str(cfg),
                 "--out", str(tmp_path / "m.bin")]) == 1


def test_run_experiment_and_report(dataset_dir, tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        f"dataset_dir = {dataset_dir}\n"
        "method = tp\nt = 4\neta = 0.5\nnum_clusters = 3\nalpha = 0.01\n"
        "labels_per_class = 2\ntest_size = 8\nseeds = 0,1\n"
        "hidden_units = 4\nmax_epochs = 6\ndropout_rate = 0.0\n")
    out_dir = tmp_path / "runs"
    assert main(["run-experiment", "--config", str(cfg),
                 "--out-dir", str(out_dir)]) == 0
    csv_path = out_dir / "results.csv"
    assert csv_path.exists()
    capsys.readouterr()
    assert main(["report", str(csv_path), "--dataset-dir", str(dataset_dir)]) == 0
    out = capsys.readouterr().out
    assert "mean_acc" in out
    assert "degree bias" in out
    assert "graph mean degree" in out


def test_run_experiment_cli_overrides(dataset_dir, tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        f"dataset_dir = {dataset_dir}\n"
        "method = tp\nt = 4\neta = 0.5\nnum_clusters = 3\nalpha = 0.01\n"
        "labels_per_class = 2\ntest_size = 8\nseeds = 0,1\n"
        "hidden_units = 4\nmax_epochs = 6\ndropout_rate = 0.0\n")
    out_dir = tmp_path / "runs"
    assert main(["run-experiment", "--config", str(cfg), "--out-dir",
                 str(out_dir), "--method", "none", "--seeds", "5"]) == 0
    rows = (out_dir / "results.csv").read_text().splitlines()
    assert rows[1].split(",")[1] == "none"
    assert rows[1].split(",")[7] == "5"


def test_report_missing_column_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("dataset,method\nx,y\n")
    assert main(["report", str(bad)]) == 1


def test_runtime_error_exits_2(dataset_dir, tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("learning_rate = 1e200\nmax_epochs = 30\n"
                   "dropout_rate = 0.0\nhidden_units = 4\n")
    with np.errstate(over="ignore"):
        code = main(["train", str(dataset_dir), "--config", str(cfg),
                     "--out", str(tmp_path / "m.bin")])
    assert code == 2
    assert "runtime error" in capsys.readouterr().err
