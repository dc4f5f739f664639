import csv
import json

import pytest

from mixflow.cli import main
from mixflow.networks import grid2x2, single_intersection
from mixflow.rl.checkpoint import read_checkpoint

FAST = ["--horizon", "60", "--hidden", "16,16"]


@pytest.fixture
def single_file(tmp_path):
    doc = single_intersection()
    doc["train"]["warmup"] = 20
    doc["train"]["batch_size"] = 8
    path = tmp_path / "single.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def grid_file(tmp_path):
    doc = grid2x2()
    doc["train"]["warmup"] = 20
    doc["train"]["batch_size"] = 8
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(doc))
    return path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_train_one_iteration(single_file, tmp_path):
    out = tmp_path / "a.mfck"
    assert main(["train", "--scenario", str(single_file), "--iterations", "1", "--seed", "7",
                 "--out", str(out), *FAST]) == 0
    assert read_checkpoint(out).config.seed == 7
    log = rows(str(out) + ".log.csv")
    assert log[0] == ["iteration", "episode_return", "mean_loss", "epsilon", "buffer_size"]
    assert len(log) == 2
    again = tmp_path / "b.mfck"
    main(["train", "--scenario", str(single_file), "--iterations", "1", "--seed", "7", "--out", str(again),
          *FAST])
    assert again.read_bytes() == out.read_bytes()


def test_missing_scenario_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["train", "--scenario", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_config_exit_2(single_file, capsys):
    assert main(["eval", "--scenario", str(single_file), "--config", "2U+0S", "--policy", "rule"]) == 2


def test_eval_single_run(single_file, tmp_path):
    ck = tmp_path / "c.mfck"
    main(["train", "--scenario", str(single_file), "--iterations", "1", "--out", str(ck), *FAST])
    out = tmp_path / "rep"
    assert main(["eval", "--scenario", str(single_file), "--checkpoint", str(ck), "--runs", "1",
                 "--out", str(out), "--dump-logs", *FAST]) == 0
    net = rows(out / "network.csv")
    assert len(net) == 2 and net[1][0] == "network"
    assert (out / "events_0.log").exists() and (out / "decisions_0.csv").exists()
    first = (out / "table.csv").read_text()
    main(["eval", "--scenario", str(single_file), "--checkpoint", str(ck), "--runs", "1", "--out", str(out),
          *FAST])
    assert (out / "table.csv").read_text() == first


def test_corrupted_checkpoint_nonzero(single_file, tmp_path, capsys):
    ck = tmp_path / "c.mfck"
    main(["train", "--scenario", str(single_file), "--iterations", "0", "--out", str(ck), *FAST])
    ck.write_bytes(ck.read_bytes()[:-3])
    assert main(["eval", "--scenario", str(single_file), "--checkpoint", str(ck), *FAST]) != 0
    assert "crc" in capsys.readouterr().err.lower()


def test_degenerate_sweep_equals_eval(grid_file, tmp_path):
    a, b = tmp_path / "sweep", tmp_path / "eval"
    assert main(["sweep", "--scenario", str(grid_file), "--config", "0U+4S", "--rv-rate", "0.8", "--runs", "2",
                 "--checkpoint", str(tmp_path / "ck"), "--out", str(a), *FAST]) == 0
    assert main(["eval", "--scenario", str(grid_file), "--config", "0U+4S", "--rv-rate", "0.8", "--runs", "2",
                 "--out", str(b), *FAST]) == 0
    for name in ("table.csv", "network.csv", "per_intersection.csv"):
        assert (a / name).read_text() == (b / name).read_text()


def test_sweep_grid_columns(grid_file, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--scenario", str(grid_file), "--config", "0U+4S,2U+2S", "--rv-rate", "0.5",
                 "--rv-rate", "0.8", "--train", "--iterations", "1", "--checkpoint", str(tmp_path / "ck"),
                 "--out", str(out), *FAST]) == 0
    table = rows(out / "table.csv")
    assert len(table[0]) == 1 + 4 * 2
    assert len(table) == 1 + 4 + 1


def test_sweep_missing_checkpoint_fails(grid_file, tmp_path, capsys):
    assert main(["sweep", "--scenario", str(grid_file), "--config", "2U+2S", "--checkpoint",
                 str(tmp_path / "none"), "--out", str(tmp_path / "o"), *FAST]) == 1
    assert "2U+2S" in capsys.readouterr().err
