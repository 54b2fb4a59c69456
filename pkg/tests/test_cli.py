import json
import subprocess
import sys

import pytest

from battag.cli import main
from battag.config import save_config, tiny_experiment


@pytest.fixture
def config_file(tmp_path):
    cfg = tiny_experiment(
        synthetic={"n_sequences": 40},
        epochs=2,
        loss={"family": "CECLA", "gamma": 1, "lambda": 20, "weight_scheme": "array"},
        output_dir=str(tmp_path / "out"),
    )
    return save_config(cfg, tmp_path / "cfg.json")


def test_train_then_eval(config_file, tmp_path, capsys):
    assert main(["train", str(config_file), "--quiet"]) == 0
    out = tmp_path / "out"
    assert (out / "metrics.csv").exists() and (out / "model.ckpt").exists()
    capsys.readouterr()
    assert main(["eval", str(config_file), str(out / "model.ckpt")]) == 0
    scores = json.loads(capsys.readouterr().out)
    assert set(scores) >= {"loss", "macro_f1", "macro_f2", "micro_f1"}


def test_emit_schedule(tmp_path, capsys):
    assert main(["emit-schedule", "--variant", "v4", "--mult", "1.001", "--steps", "20000", "--out", str(tmp_path / "s.csv")]) == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "step,lrate" and len(lines) == 20001
    assert main(["emit-schedule", "--variant", "v1", "--steps", "3"]) == 0
    assert capsys.readouterr().out.count("\n") == 4


def test_gen_data(config_file, tmp_path, capsys):
    assert main(["gen-data", str(config_file), "--out", str(tmp_path / "d.jsonl")]) == 0
    rows = (tmp_path / "d.jsonl").read_text().splitlines()
    assert len(rows) == 40 and set(json.loads(rows[0])) == {"tokens", "labels"}


def test_sweep(config_file, tmp_path, capsys):
    assert main(["sweep-lambda", str(config_file), "--lambdas", "1,20"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "lambda,micro_f1,macro_f1,macro_f2,sign_boundary" and len(out) == 3


def test_grad_check_passes(capsys):
    assert main(["grad-check", "--batches", "3"]) == 0
    assert "gradient checks passed" in capsys.readouterr().out


class TestExitCodes:
    def test_configuration_errors_exit_2(self, tmp_path, capsys):
        assert main(["train", str(tmp_path / "nope.json")]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"loss": {"family": "CECLA", "weight_scheme": "ee"}}))
        assert main(["train", str(bad)]) == 2
        assert main(["emit-schedule", "--variant", "v8"]) == 2
        assert "configuration error" in capsys.readouterr().err

    def test_bad_lambda_list(self, config_file):
        assert main(["sweep-lambda", str(config_file), "--lambdas", "1,x"]) == 2
        assert main(["sweep-lambda", str(config_file), "--lambdas", "0.5"]) == 2

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "battag", "emit-schedule", "--steps", "2"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0 and proc.stdout.startswith("step,lrate")
        proc = subprocess.run([sys.executable, "-m", "battag", "train", str(tmp_path / "x.json")], capture_output=True)
        assert proc.returncode == 2

    def test_aborted_training_exits_1(self, config_file, monkeypatch, capsys):
        from battag import cli
        from battag.errors import TrainingAborted

        def boom(*a, **k):
            raise TrainingAborted(epoch=1, batch=2, lrate=1e-3, family="CE", loss=float("nan"))

        monkeypatch.setattr(cli, "train", boom)
        assert main(["train", str(config_file), "--quiet"]) == 1
        assert "epoch 1, batch 2" in capsys.readouterr().err
