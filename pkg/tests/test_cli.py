import json
import os
import re

import pandas as pd
import pytest
from typer.testing import CliRunner

import app
from app import EXIT_MISMATCH, EXIT_MISSING_INPUT, EXIT_USAGE, cli, exit_code_for
from simulator.errors import FixtureMissError, InstructionParseError, SearchLimitError, TrainingDivergedError
from utils.config import RunConfig
from utils.io_utils import RunManifest, dataset_hash

runner = CliRunner()
GOLDEN_HELP = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden", "help")

COMMANDS = ["gen-dataset", "gen-expert-data", "train", "eval", "sweep-budget", "ablate-rewards", "replay", "report",
            "calibrate-judge"]


def _gen(out, seed=3):
    return runner.invoke(cli, ["--quiet", "gen-dataset", "--out", str(out), "--seed", str(seed),
                               "--episodes-per-family", "1", "--train-scenes", "1", "--eval-scenes", "1"])


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "dataset"
    result = _gen(out)
    assert result.exit_code == 0, result.output
    return out


def _golden_help(command):
    with open(os.path.join(GOLDEN_HELP, f"{command}.txt"), "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    summary = lines[0].removeprefix("summary: ")
    arguments = [line.removeprefix("argument: ") for line in lines if line.startswith("argument: ")]
    flags = {line for line in lines if line.startswith("--")}
    return summary, arguments, flags


@pytest.mark.parametrize("command", COMMANDS)
def test_help_matches_golden_file(command):
    result = runner.invoke(cli, [command, "--help"], env={"COLUMNS": "200", "NO_COLOR": "1"})
    assert result.exit_code == 0
    assert "Usage" in result.output
    summary, arguments, flags = _golden_help(command)
    text = " ".join(result.output.split())
    assert summary in text
    for argument in arguments:
        assert argument in text
    assert set(re.findall(r"--[a-z][a-z-]*", result.output)) == flags


def test_gen_dataset_is_reproducible(cli_dataset, tmp_path):
    again = tmp_path / "again"
    result = _gen(again)
    assert result.exit_code == 0, result.output
    digest = dataset_hash(str(again))
    assert digest == dataset_hash(str(cli_dataset))
    assert digest in result.output
    manifest = RunManifest.read(str(again))
    assert manifest.command == "gen-dataset"
    assert manifest.dataset_hash == digest


def test_expert_data_then_replay(cli_dataset, tmp_path):
    out = tmp_path / "expert"
    result = runner.invoke(cli, ["--quiet", "gen-expert-data", "--dataset", str(cli_dataset), "--out", str(out)])
    assert result.exit_code == 0, result.output
    path = out / "expert_trajectories.jsonl"
    assert path.exists()

    result = runner.invoke(cli, ["--quiet", "replay", str(path)])
    assert result.exit_code == 0, result.output

    lines = path.read_text().splitlines()
    step = json.loads(lines[1])
    step["obs_digest"] = "0" * 64
    lines[1] = json.dumps(step)
    path.write_text("\n".join(lines) + "\n")
    result = runner.invoke(cli, ["--quiet", "replay", str(path)])
    assert result.exit_code == EXIT_MISMATCH


def test_eval_and_report(cli_dataset, tmp_path):
    out = tmp_path / "eval"
    result = runner.invoke(cli, ["--quiet", "eval", "--dataset", str(cli_dataset), "--out", str(out),
                                 "--agent", "expert", "--max-episodes", "3"])
    assert result.exit_code == 0, result.output
    assert (out / "summary.csv").exists()
    assert (out / "unseen_scenes.json").exists() and (out / "unseen_tasks_per_family.csv").exists()
    assert RunManifest.read(str(out)).dataset_hash == dataset_hash(str(cli_dataset))

    result = runner.invoke(cli, ["--quiet", "report", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "report_summary.csv").exists()


def test_missing_dataset(tmp_path):
    result = runner.invoke(cli, ["--quiet", "eval", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path),
                                 "--agent", "expert"])
    assert result.exit_code == EXIT_MISSING_INPUT


def test_policy_agent_needs_a_checkpoint(cli_dataset, tmp_path):
    result = runner.invoke(cli, ["--quiet", "eval", "--dataset", str(cli_dataset), "--out", str(tmp_path)])
    assert result.exit_code == EXIT_USAGE


def test_unknown_flag_is_a_usage_error():
    result = runner.invoke(cli, ["gen-dataset", "--out", "x", "--bogus"])
    assert result.exit_code == 2


def test_bad_reward_mode_is_a_usage_error(cli_dataset, tmp_path):
    result = runner.invoke(cli, ["--quiet", "train", "--dataset", str(cli_dataset), "--out", str(tmp_path / "run"),
                                 "--reward-mode", "bogus"])
    assert result.exit_code == EXIT_USAGE
    assert not os.path.exists(tmp_path / "run")


def test_report_on_empty_directory(tmp_path):
    result = runner.invoke(cli, ["--quiet", "report", str(tmp_path)])
    assert result.exit_code == EXIT_MISSING_INPUT


@pytest.mark.parametrize("exc, code", [
    (FileNotFoundError("x"), 3),
    (FixtureMissError("x"), 3),
    (TrainingDivergedError("x", "ckpt.json"), 5),
    (SearchLimitError("x"), 6),
    (InstructionParseError("x"), 2),
    (ValueError("x"), 2),
    (RuntimeError("x"), 1),
])
def test_exit_codes(exc, code):
    assert exit_code_for(exc) == code


def test_commands_run_with_default_config(cli_dataset, tmp_path, monkeypatch):
    seen = {}

    def fake_train(cfg, dataset, out, progress=True):
        seen["train"] = cfg

    def fake_table(name):
        def flow(cfg, dataset, out, seeds):
            seen[name] = (cfg, tuple(seeds))
            return pd.DataFrame()
        return flow

    monkeypatch.setattr(app, "run_train", fake_train)
    monkeypatch.setattr(app, "run_sweep_budget", fake_table("sweep"))
    monkeypatch.setattr(app, "run_ablate_rewards", fake_table("ablate"))

    args = ["--dataset", str(cli_dataset), "--out", str(tmp_path / "run")]
    for command in ("train", "sweep-budget", "ablate-rewards"):
        result = runner.invoke(cli, ["--quiet", command, *args])
        assert result.exit_code == 0, result.output

    assert seen["train"] == RunConfig()
    assert seen["sweep"] == (RunConfig(), (0,))
    assert seen["ablate"] == (RunConfig(), (0,))


def test_eval_without_optional_flags(cli_dataset, tmp_path):
    out = tmp_path / "eval"
    result = runner.invoke(cli, ["--quiet", "eval", "--dataset", str(cli_dataset), "--out", str(out),
                                 "--agent", "expert"])
    assert result.exit_code == 0, result.output
    manifest = RunManifest.read(str(out))
    assert RunConfig.model_validate(manifest.config) == RunConfig()
