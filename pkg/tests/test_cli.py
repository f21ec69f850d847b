import csv
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sdtgcn.baselines import make_model
from sdtgcn.checkpoint import save_checkpoint
from sdtgcn.cli import main
from sdtgcn.dataset import NormStats, load_bundle
from sdtgcn.gcn import fit_ref_stats
from sdtgcn.model import TrainConfig

DATA = Path(__file__).parent / "data"
FAST = ["--T", "4", "--max-epochs", "4", "--patience-start", "2", "--patience", "1"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    path = tmp_path_factory.mktemp("synth") / "bundle.json"
    assert main(["synth", "--out", str(path), "--n-topics", "8", "--n-years", "26", "--w", "3",
                 "--T", "4", "--seed", "1"]) == 0
    return path


@pytest.fixture(scope="module")
def trained(synth, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--data", str(synth), "--model", "sdtgcn", "--out", str(out / "ckpt.json"),
                 "--history", str(out / "history.csv"), *FAST]) == 0
    return out / "ckpt.json"


# -- build


def test_build_matches_golden(tmp_path, capsys):
    out = tmp_path / "bundle.json"
    code = main(["build", "--input", str(DATA / "fixture_papers.jsonl"), "--out", str(out),
                 "--top-k", "20", "--sample-n", "20", "--w", "3", "--years", "2010:2019"])
    assert code == 0
    assert out.read_bytes() == (DATA / "fixture_bundle.json").read_bytes()
    printed = capsys.readouterr().out
    assert "vocabulary size: 20" in printed and "dangling references: 2" in printed


def test_build_is_idempotent(tmp_path):
    args = ["build", "--input", str(DATA / "fixture_papers.jsonl"), "--top-k", "20", "--sample-n", "12",
            "--w", "2", "--years", "2008:2019", "--seed", "5"]
    main(args + ["--out", str(tmp_path / "a.json")])
    main(args + ["--out", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_build_empty_input_exits_3(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["build", "--input", str(empty), "--out", str(tmp_path / "o.json")]) == 3


def test_build_malformed_record_exits_2_with_line(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "year": 2000, "topics": ["x"], "references": []}\n{"id": "b", "year": \n')
    assert main(["build", "--input", str(bad), "--out", str(tmp_path / "o.json")]) == 2
    assert "2" in capsys.readouterr().err


def test_missing_input_exits_2(tmp_path):
    assert main(["build", "--input", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o.json")]) == 2


def test_unknown_flag_exits_2(capsys):
    assert main(["train", "--bogus"]) == 2


# -- train


def test_train_prints_best_validation(synth, tmp_path, capsys):
    assert main(["train", "--data", str(synth), "--model", "tcn", "--out", str(tmp_path / "c.json"), *FAST]) == 0
    assert capsys.readouterr().out.strip().splitlines()[-1].startswith("best validation MSE: ")


def test_train_ha_writes_marker_checkpoint(synth, tmp_path):
    import json
    assert main(["train", "--data", str(synth), "--model", "ha", "--out", str(tmp_path / "ha.json"),
                 "--history", str(tmp_path / "h.csv"), "--T", "4"]) == 0
    ckpt = json.loads((tmp_path / "ha.json").read_text())
    assert ckpt["params"] == [] and ckpt["config"]["model"] == "ha"
    assert rows(tmp_path / "h.csv") == [["epoch", "train_loss", "val_loss", "lr", "elapsed_ms"]]


def test_train_twice_is_byte_identical(synth, tmp_path):
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        assert main(["train", "--data", str(synth), "--out", str(d / "ckpt.json"),
                     "--history", str(d / "history.csv"), *FAST]) == 0
        assert main(["eval", "--data", str(synth), "--ckpt", str(d / "ckpt.json"),
                     "--out", str(d / "results.csv")]) == 0
    for name in ("ckpt.json", "history.csv", "results.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_too_small_exits_3(tmp_path):
    bundle = tmp_path / "b.json"
    main(["synth", "--out", str(bundle), "--n-topics", "3", "--n-years", "14", "--w", "2", "--T", "4"])
    assert main(["train", "--data", str(bundle), "--out", str(tmp_path / "c.json"), "--T", "8"]) == 3


def test_train_non_finite_exits_4(synth, tmp_path, capsys):
    with np.errstate(all="ignore"):
        code = main(["train", "--data", str(synth), "--out", str(tmp_path / "c.json"), *FAST, "--lr", "1e300"])
    assert code == 4
    assert "epoch" in capsys.readouterr().err


def test_bad_config_value_exits_2(synth, tmp_path):
    assert main(["train", "--data", str(synth), "--out", str(tmp_path / "c.json"), "--dropout", "1.5"]) == 2


def test_config_file_precedence(synth, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# experiment\nmax_epochs = 3\npatience_start = 2\npatience = 1\nT = 5\nseed = 7\n")
    out = tmp_path / "c.json"
    assert main(["--config", str(cfg), "train", "--data", str(synth), "--out", str(out), "--T", "4"]) == 0
    import json
    config = json.loads(out.read_text())["config"]
    assert config["T"] == 4 and config["seed"] == 7 and config["max_epochs"] == 3
    assert config["lr"] == TrainConfig().lr


def test_config_file_errors(synth, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("max_epochs\n")
    assert main(["--config", str(bad), "gradcheck"]) == 2
    assert main(["--config", str(tmp_path / "missing.cfg"), "gradcheck"]) == 2


# -- eval, predict, plot-data


def test_eval_ha_ten_runs(synth, tmp_path):
    ckpt = tmp_path / "ha.json"
    main(["train", "--data", str(synth), "--model", "ha", "--out", str(ckpt), "--T", "4"])
    out = tmp_path / "results.csv"
    assert main(["eval", "--data", str(synth), "--ckpt", str(ckpt), "--runs", "10", "--out", str(out)]) == 0
    table = rows(out)
    assert table[0] == ["model", "T", "seed", "space", "mae", "mse", "var"]
    runs, mean = table[1:11], table[11]
    assert len(table) == 12 and all(r == runs[0] for r in runs)
    assert mean[2] == "mean" and mean[4:] == runs[0][4:]


def test_eval_appends(trained, synth, tmp_path):
    out = tmp_path / "results.csv"
    for space in ("normalized", "count"):
        assert main(["eval", "--data", str(synth), "--ckpt", str(trained), "--space", space,
                     "--out", str(out)]) == 0
    table = rows(out)
    assert len(table) == 5 and [r[3] for r in table[1:]] == ["normalized"] * 2 + ["count"] * 2


def test_missing_checkpoint_exits_2(synth, tmp_path):
    assert main(["eval", "--data", str(synth), "--ckpt", str(tmp_path / "none.json"),
                 "--out", str(tmp_path / "r.csv")]) == 2
    assert main(["predict", "--data", str(synth), "--ckpt", str(tmp_path / "none.json"),
                 "--window-end", "1990", "--out", str(tmp_path / "p.csv")]) == 2


def test_corrupt_checkpoint_exits_2(synth, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1, "params": []}')
    assert main(["eval", "--data", str(synth), "--ckpt", str(bad), "--out", str(tmp_path / "r.csv")]) == 2


def test_predict_writes_topic_rows(trained, synth, tmp_path):
    seq = load_bundle(synth)
    end = seq.years[-2]
    out = tmp_path / "p.csv"
    assert main(["predict", "--ckpt", str(trained), "--data", str(synth), "--window-end", str(end),
                 "--out", str(out)]) == 0
    table = rows(out)
    assert table[0] == ["topic", "predicted", "actual"] and len(table) == 9
    assert [r[0] for r in table[1:]] == list(seq.vocabulary.topics)
    assert [int(r[2]) for r in table[1:]] == seq.snapshots[-1].targets.tolist()
    assert all(float(r[1]) >= 0 for r in table[1:])


def test_predict_rejects_short_history(trained, synth, tmp_path):
    seq = load_bundle(synth)
    assert main(["predict", "--ckpt", str(trained), "--data", str(synth), "--window-end", str(seq.years[1]),
                 "--out", str(tmp_path / "p.csv")]) == 2


def test_plot_data_fifty_topics(tmp_path):
    bundle, ckpt, out = tmp_path / "b.json", tmp_path / "ha.json", tmp_path / "fig.csv"
    main(["synth", "--out", str(bundle), "--n-topics", "60", "--n-years", "20", "--w", "2", "--T", "4"])
    main(["train", "--data", str(bundle), "--model", "ha", "--out", str(ckpt), "--T", "4"])
    assert main(["plot-data", "--ckpt", str(ckpt), "--data", str(bundle), "--topics", "50",
                 "--seed", "3", "--out", str(out)]) == 0
    table = rows(out)
    assert table[0] == ["topic_id", "topic_name", "predicted", "actual"]
    assert len(table) == 51
    ids = [int(r[0]) for r in table[1:]]
    assert ids == sorted(set(ids)) and all(r[1] == f"topic{int(r[0]):03d}" for r in table[1:])
    again = tmp_path / "fig2.csv"
    main(["plot-data", "--ckpt", str(ckpt), "--data", str(bundle), "--seed", "3", "--out", str(again)])
    assert again.read_bytes() == out.read_bytes()


def test_plot_data_on_fixture(tmp_path):
    seq = load_bundle(DATA / "fixture_bundle.json")
    counts = np.stack([s.targets for s in seq.snapshots])
    adjacency = np.stack([s.adjacency for s in seq.snapshots])
    model = make_model("ha", TrainConfig(T=3), seq.n_topics, seq.w, NormStats.fit(counts), fit_ref_stats(adjacency))
    save_checkpoint(model, tmp_path / "ha.json")
    out = tmp_path / "fig.csv"
    assert main(["plot-data", "--ckpt", str(tmp_path / "ha.json"), "--data", str(DATA / "fixture_bundle.json"),
                 "--out", str(out)]) == 0
    table = rows(out)
    # the fixture only has 20 topics, so the 50-topic sample is clamped
    assert table[0] == ["topic_id", "topic_name", "predicted", "actual"] and len(table) == 21
    learning = next(r for r in table[1:] if r[1] == "learning")
    assert float(learning[2]) == pytest.approx(5 / 3, abs=1e-15) and learning[3] == "1"


# -- gradcheck


def test_gradcheck_passes(capsys):
    assert main(["gradcheck"]) == 0
    err = float(capsys.readouterr().out.split(":")[1])
    assert err < 1e-4


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sdtgcn.cli", "synth", "--out", str(tmp_path / "s.json"),
                           "--n-topics", "3", "--n-years", "16"], capture_output=True, text=True)
    assert proc.returncode == 0 and (tmp_path / "s.json").exists()
