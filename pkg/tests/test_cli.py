#!/usr/bin/env python
# -*- coding: utf-8 -*-

__license__ = "MIT"

import argparse
import json
import os
import sys

import pandas as pd
import pytest

from rlforge import __version__
from rlforge.cli import CONFIG_DEFAULT, RLForge
from rlforge.workflow.scripts.policy import LinearQPolicy, save_policy
from rlforge.workflow.scripts.replay import VectorReplayBuffer, save_buffer
from rlforge.workflow.scripts.utilities import load_yaml

QUICK_RUN = [
    "--num-envs",
    "2",
    "--seed",
    "3",
    "--trainer.max_epoch=1",
    "--trainer.steps_per_epoch=200",
    "--trainer.eval_interval=5",
    "--trainer.eval_episodes=2",
    "--log.verbose=false",
]


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv("RLFORGE_OUT", raising=False)


def run(monkeypatch, *argv):
    monkeypatch.setattr(sys, "argv", ["rlforge", *argv])

    with pytest.raises(SystemExit) as error:
        RLForge()

    return error.value.code


@pytest.fixture
def trained(tmp_path, monkeypatch):
    """Output directory of a short off-policy run on the default chain."""
    out = str(tmp_path / "run")
    assert run(monkeypatch, "train", "--output", out, *QUICK_RUN) == 0
    return out


def test_no_arguments_prints_help(monkeypatch, capsys):
    assert run(monkeypatch) == 0
    assert "The rlforge commands are" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [["config", "--version"], ["train", "-v"], ["bench", "--version"]])
def test_version(argv, monkeypatch, capsys):
    assert run(monkeypatch, *argv) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_version_flag_of_the_common_arguments(capsys):
    parser = argparse.ArgumentParser(add_help=False)
    cli = RLForge.__new__(RLForge)
    cli.config_default = load_yaml(CONFIG_DEFAULT)
    cli._config_arguments(parser)

    with pytest.raises(SystemExit) as error:
        parser.parse_args(["--version"])

    assert error.value.code == 0
    assert capsys.readouterr().out.strip() == __version__


def test_unwritable_config_echo_is_a_runtime_error(tmp_path, monkeypatch, capsys):
    out = tmp_path / "run"
    (out / "config.json").mkdir(parents=True)
    (out / "config.json" / "keep").write_bytes(b"")

    assert run(monkeypatch, "train", "--output", str(out), *QUICK_RUN) == 2
    assert "StorageError" in capsys.readouterr().err


def test_config_dump_applies_overrides(monkeypatch, capsys):
    code = run(
        monkeypatch,
        "config",
        "dump",
        "--seed",
        "7",
        "--trainer.max_epoch=3",
        "--policy.learning_rate=1e-3",
        "--env.overrides.1=chain:6+timelimit:20+latency:5",
    )
    config = json.loads(capsys.readouterr().out)

    assert code == 0
    assert config["trainer"]["seed"] == 7
    assert config["trainer"]["max_epoch"] == 3
    assert config["policy"]["learning_rate"] == 0.001
    assert config["env"]["overrides"] == {"1": "chain:6+timelimit:20+latency:5"}


def test_config_precedence(tmp_path, monkeypatch, capsys):
    path = tmp_path / "user.yaml"
    path.write_text("trainer:\n  seed: 1\n  max_epoch: 2\nvenv:\n  num_envs: 3\n")
    monkeypatch.setenv("RLFORGE_OUT", str(tmp_path / "from_env"))

    code = run(monkeypatch, "config", "dump", "--config", str(path), "--trainer.seed=5", "--num-envs", "6")
    config = json.loads(capsys.readouterr().out)

    assert code == 0
    assert config["trainer"]["max_epoch"] == 2
    assert config["trainer"]["seed"] == 5
    assert config["venv"]["num_envs"] == 6
    assert config["output"]["dir"] == str(tmp_path / "from_env")


@pytest.mark.parametrize(
    "argument",
    [
        "--trainer.max_epochs=3",
        "--returns.gamma=2",
        "--trainer.paradigm=imitation",
        "--env.id=mountaincar",
        "--env.overrides.first=cartpole",
        "--venv.num_envs=0",
        "--bogus",
    ],
)
def test_invalid_config_exits_with_one(monkeypatch, argument):
    assert run(monkeypatch, "config", "dump", argument) == 1


def test_unknown_key_in_config_file(tmp_path, monkeypatch):
    path = tmp_path / "user.yaml"
    path.write_text("trainer:\n  epochs: 2\n")

    assert run(monkeypatch, "config", "dump", "--config", str(path)) == 1


def test_train_writes_artifacts(trained):
    with open(os.path.join(trained, "config.json")) as handle:
        config = json.load(handle)

    assert config["trainer"]["seed"] == 3
    assert config["venv"]["num_envs"] == 2
    assert os.path.exists(os.path.join(trained, "config.yaml"))

    with open(os.path.join(trained, "report.json")) as handle:
        report = json.load(handle)

    assert report["paradigm"] == "off-policy"
    assert report["env_steps"] >= 200
    assert report["update_steps"] > 0
    assert len(report["epochs"]) == 1
    assert sum(report["time_breakdown"].values()) == pytest.approx(100.0)

    logs = pd.read_csv(os.path.join(trained, "logs.csv"))
    assert "eval/return_mean" in set(logs["metric"])

    for name in ("checkpoint.tsck", "final_buffer.tsbf", "best_policy.tspl"):
        assert os.path.exists(os.path.join(trained, name))


def test_resume_continues_the_run(trained, monkeypatch):
    checkpoint = os.path.join(trained, "checkpoint.tsck")
    argv = ["--resume", checkpoint, "--output", trained, "--trainer.max_epoch=2", "--log.verbose=false"]
    code = run(monkeypatch, "train", *argv)

    with open(os.path.join(trained, "report.json")) as handle:
        report = json.load(handle)

    assert code == 0
    assert [epoch["epoch"] for epoch in report["epochs"]] == [1, 2]
    assert report["env_steps"] >= 400


def test_resume_rejects_other_env(trained, monkeypatch, capsys):
    checkpoint = os.path.join(trained, "checkpoint.tsck")
    code = run(monkeypatch, "train", "--resume", checkpoint, "--output", trained, "--env.id=chain:7+timelimit:20")

    assert code == 2
    assert "ConfigMismatch" in capsys.readouterr().err


@pytest.mark.parametrize("name", ["checkpoint.tsck", "best_policy.tspl"])
def test_eval_prints_json(trained, monkeypatch, capsys, name):
    capsys.readouterr()
    code = run(monkeypatch, "eval", "--checkpoint", os.path.join(trained, name), "--episodes", "3")
    result = json.loads(capsys.readouterr().out)

    assert code == 0
    assert result["episodes"] == 3
    assert len(result["returns"]) == 3
    assert result["env"] == "chain:6+timelimit:20"
    assert set(result) == {"env", "mode", "episodes", "mean", "std", "returns", "lengths"}


def test_eval_rejects_unreadable_checkpoint(tmp_path, monkeypatch):
    path = tmp_path / "garbage.tsck"
    path.write_bytes(b"TSCK" + b"\x00" * 32)

    assert run(monkeypatch, "eval", "--checkpoint", str(path)) == 1
    assert run(monkeypatch, "eval", "--checkpoint", str(tmp_path / "missing.tsck")) == 1


def test_eval_rejects_mismatched_env(trained, monkeypatch):
    checkpoint = os.path.join(trained, "checkpoint.tsck")
    assert run(monkeypatch, "eval", "--checkpoint", checkpoint, "--env", "cartpole") == 1


def test_buffer_info(trained, monkeypatch, capsys):
    capsys.readouterr()
    code = run(monkeypatch, "buffer", "info", os.path.join(trained, "final_buffer.tsbf"))
    totals = json.loads(capsys.readouterr().out.strip().splitlines()[-1])

    assert code == 0
    assert totals["layout"] == "vector"
    assert totals["n_envs"] == 2
    assert totals["size"] >= 200
    assert totals["episodes"] >= 1


def test_buffer_info_on_truncated_file(trained, tmp_path, monkeypatch, capsys):
    with open(os.path.join(trained, "final_buffer.tsbf"), "rb") as handle:
        data = handle.read()

    path = tmp_path / "truncated.tsbf"
    path.write_bytes(data[: len(data) // 2])

    assert run(monkeypatch, "buffer", "info", str(path)) == 2
    assert "ChecksumMismatch" in capsys.readouterr().err


def test_export_import_and_train_offline(trained, tmp_path, monkeypatch):
    exported = str(tmp_path / "exported.tsbf")
    assert run(monkeypatch, "buffer", "export", "--from", trained, "--output", exported) == 0
    checkpoint = os.path.join(trained, "checkpoint.tsck")
    assert run(monkeypatch, "buffer", "export", "--from", checkpoint, "--output", exported) == 0

    datasets = str(tmp_path / "datasets")
    assert run(monkeypatch, "buffer", "import", "--input", exported, "--output", datasets) == 0

    dataset = os.path.join(datasets, "dataset.tsbf")
    assert os.path.exists(dataset)

    out = str(tmp_path / "offline")
    code = run(
        monkeypatch,
        "train",
        "--output",
        out,
        "--policy.kind=bc",
        "--trainer.paradigm=offline",
        f"--offline.dataset={dataset}",
        "--trainer.max_epoch=1",
        "--trainer.steps_per_epoch=20",
        "--trainer.batch_size=16",
        "--trainer.eval_episodes=2",
        "--log.verbose=false",
    )

    with open(os.path.join(out, "report.json")) as handle:
        report = json.load(handle)

    assert code == 0
    assert report["paradigm"] == "offline"
    assert report["update_steps"] == 20
    assert not os.path.exists(os.path.join(out, "final_buffer.tsbf"))


def test_offline_without_dataset(tmp_path, monkeypatch):
    code = run(
        monkeypatch,
        "train",
        "--output",
        str(tmp_path / "offline"),
        "--policy.kind=bc",
        "--trainer.paradigm=offline",
        "--log.verbose=false",
    )

    assert code == 1


def test_bench_prints_both_modes(monkeypatch, capsys):
    code = run(monkeypatch, "bench", "--duration", "0.2", "--num-envs", "2", "--log.verbose=false")
    report = json.loads(capsys.readouterr().out)

    assert code == 0
    assert set(report) == {"sync", "async"}
    assert len(report["sync"]["per_env_steps"]) == 2


def test_resume_of_a_finished_run_warns(trained, monkeypatch, capsys):
    capsys.readouterr()
    code = run(monkeypatch, "train", "--resume", os.path.join(trained, "checkpoint.tsck"), "--output", trained)

    assert code == 0
    assert "already at epoch 1" in capsys.readouterr().err


def test_eval_of_optimal_chain_policy(tmp_path, monkeypatch, capsys):
    policy = LinearQPolicy(4, 2)
    policy.weights[:, 1] = 1.0
    path = str(tmp_path / "optimal.tspl")
    save_policy(policy, path)

    code = run(monkeypatch, "eval", "--checkpoint", path, "--env", "chain:4+timelimit:10", "--episodes", "10")
    result = json.loads(capsys.readouterr().out)

    assert code == 0
    assert result["mean"] == 1.0
    assert result["std"] == 0.0
    assert result["lengths"] == [3] * 10


def test_stochastic_eval_is_reproducible(trained, monkeypatch, capsys):
    outputs = []

    for _ in range(2):
        capsys.readouterr()
        argv = ["eval", "--checkpoint", os.path.join(trained, "best_policy.tspl"), "--mode", "stochastic"]
        assert run(monkeypatch, *argv, "--eval-seed", "11", "--episodes", "4") == 0
        outputs.append(json.loads(capsys.readouterr().out))

    assert outputs[0] == outputs[1]
    assert outputs[0]["mode"] == "stochastic"


def test_buffer_info_on_empty_buffer(tmp_path, monkeypatch, capsys):
    path = str(tmp_path / "empty.tsbf")
    save_buffer(VectorReplayBuffer(8, 2), path)

    assert run(monkeypatch, "buffer", "info", path) == 0

    totals = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert totals["size"] == 0
    assert totals["episodes"] == 0
    assert totals["tail_index"] == []


def test_reinforce_run_and_identical_logs(tmp_path, monkeypatch):
    argv = [
        "--policy.kind=reinforce",
        "--trainer.paradigm=on-policy",
        "--trainer.collect_unit=episode",
        "--trainer.collect_per_iter=2",
        "--policy.learning_rate=0.05",
        *QUICK_RUN,
    ]
    outputs = [str(tmp_path / "first"), str(tmp_path / "second")]

    for out in outputs:
        assert run(monkeypatch, "train", "--output", out, *argv) == 0

    with open(os.path.join(outputs[0], "report.json")) as handle:
        report = json.load(handle)

    expected = {
        "paradigm",
        "epochs",
        "best_score",
        "best_epoch",
        "best_checkpoint",
        "time_breakdown",
        "env_steps",
        "update_steps",
        "episodes",
        "early_stop",
    }
    assert set(report) == expected
    assert report["paradigm"] == "on-policy"

    logs = [open(os.path.join(out, "logs.csv")).read() for out in outputs]
    assert logs[0] == logs[1]

    env_steps = pd.read_csv(os.path.join(outputs[0], "logs.csv"))["env_step"]
    assert env_steps.is_monotonic_increasing
