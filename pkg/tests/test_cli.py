import csv
import json

import pytest

from pipetrain.cli import RunConfig, main

SMALL = {
    "steps": 60,
    "batch": 32,
    "eval_every": 20,
    "devices": 3,
    "model": {"hidden": [16, 16, 16], "activation": "relu"},
    "data": {"kind": "blobs", "n_train": 512, "n_val": 256, "d": 6, "classes": 3, "noise": 0.4},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_default_hyperparameters():
    cfg = RunConfig()
    assert (cfg.batch, cfg.gamma, cfg.eval_every) == (128, 0.9, 20)


def test_zero_steps_writes_header_only(config, tmp_path):
    out = tmp_path / "zero"
    assert main(["train", "--config", str(config), "--strategy", "single", "--steps", "0",
                 "--out", str(out)]) == 0
    assert (out / "metrics.csv").read_text() == "step,train_loss,val_loss,val_acc\n"


def test_train_outputs(config, tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(out), "--trace"]) == 0
    rows = read_csv(out / "metrics.csv")
    assert [r[0] for r in rows] == ["step", "20", "40", "60"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["strategy"] == "spectrain" and summary["plan"]["n_devices"] == 3
    assert read_csv(out / "traffic.csv")[0] == ["src", "dst", "elements", "kind", "minibatch"]
    trace = read_csv(out / "trace.csv")
    assert trace[0] == ["slot", "device", "direction", "minibatch", "version_used", "version_current"]
    assert len(trace) == 1 + 2 * 3 * 60


def test_identical_configs_give_identical_bytes(config, tmp_path):
    for name in ("a", "b"):
        assert main(["train", "--config", str(config), "--out", str(tmp_path / name), "--trace"]) == 0
    for f in ("metrics.csv", "trace.csv", "traffic.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_flags_override_config(config, tmp_path):
    out = tmp_path / "o"
    assert main(["train", "--config", str(config), "--steps", "40", "--eval-every", "10",
                 "--strategy", "data_parallel", "--devices", "4", "--out", str(out)]) == 0
    assert [r[0] for r in read_csv(out / "metrics.csv")][1:] == ["10", "20", "30", "40"]
    assert json.loads((out / "summary.json").read_text())["strategy"] == "data_parallel"


def test_compare_merges_strategies(config, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(config), "--devices", "4", "--out", str(out)]) == 0
    rows = read_csv(out / "compare.csv")
    assert rows[0] == ["strategy", "step", "train_loss", "val_loss", "val_acc"]
    by_strategy = {}
    for r in rows[1:]:
        by_strategy.setdefault(r[0], []).append(r[1])
    assert set(by_strategy) == {"single", "data_parallel", "vanilla", "stash", "spectrain"}
    assert all(steps == ["20", "40", "60"] for steps in by_strategy.values())


def test_rmse_command(config, tmp_path, capsys):
    out = tmp_path / "rmse"
    assert main(["rmse", "--config", str(config), "--s", "0,2", "--out", str(out)]) == 0
    rows = read_csv(out / "rmse.csv")
    assert rows[0] == ["step", "s", "rmse_pred", "rmse_stale"]
    assert {r[1] for r in rows[1:]} == {"0", "2"}
    assert all(float(r[2]) == float(r[3]) == 0.0 for r in rows[1:] if r[1] == "0")
    assert json.loads(capsys.readouterr().out)[0]["s"] == 0


def test_costmodel_command(tmp_path, capsys):
    cfg = tmp_path / "snn.json"
    cfg.write_text(json.dumps({
        "batch": 128, "devices": 4,
        "model": {"layers": [{"in_dim": 2048, "out_dim": 2048} for _ in range(32)]},
    }))
    out = tmp_path / "cm"
    assert main(["costmodel", "--config", str(cfg), "--out", str(out)]) == 0
    result = json.loads((out / "costmodel.json").read_text())
    assert json.loads(capsys.readouterr().out) == result
    for mode in ("dp", "mp"):
        assert set(result[mode]) == {"mode", "comm_elements", "step_time", "breakdown", "throughput"}
        assert set(result[mode]["breakdown"]) == {"computing", "p2p_transfer", "p2p_idle", "imbalance_idle"}
    assert result["dp_to_mp_volume_ratio"] > 10


def test_trace_command(config, capsys):
    assert main(["trace", "--config", str(config), "--steps", "5", "--strategy", "stash"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 1 + 2 * 3 * 5


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["train", "--config", str(bad)]) == 1
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["train", "--gamma", "0", "--out", str(tmp_path / "x")]) == 1
    assert "error" in capsys.readouterr().err


def test_divergence_exit_code(config, tmp_path):
    cfg = json.loads(config.read_text())
    cfg["model"]["activation"] = "none"
    path = tmp_path / "div.json"
    path.write_text(json.dumps(cfg))
    with pytest.warns(RuntimeWarning):
        code = main(["train", "--config", str(path), "--lr", "50", "--steps", "200",
                     "--out", str(tmp_path / "d")])
    assert code == 2
